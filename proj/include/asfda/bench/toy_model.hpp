#pragma once

#include <cstdint>
#include <vector>

#include "asfda/io.hpp"
#include "asfda/orchestrator.hpp"
#include "asfda/tensor.hpp"

namespace asfda::bench {

/// Per-voxel features: intensity, 3x3x3 box-smoothed intensity, the
/// normalized coordinates x, y, z, and the whole volume's mean intensity,
/// which stands in for the global context a deep encoder would see.
constexpr std::size_t kFeatures = 6;

/// kFeatures x V, feature-major.
std::vector<double> voxel_features(const Tensor& image);

/// Prototypes per class.
constexpr std::size_t kComponents = 3;

/// Gaussian class prototypes, kComponents per class. Prototype j of class c
/// has activation a_cj = b_cj - 1/2 sum_k exp(rho_cjk) (f_k - mu_cjk)^2 and
/// the class logit is logsumexp_j(a_cj) / T.
struct ToyModel {
    std::size_t classes = 0;
    double temperature = 1.0;
    std::vector<double> mu;   ///< classes x kComponents x kFeatures
    std::vector<double> rho;  ///< log precisions, same layout as mu
    std::vector<double> bias; ///< classes x kComponents

    std::size_t prototypes() const { return classes * kComponents; }
    std::size_t param_count() const { return prototypes() * (2 * kFeatures + 1); }
    std::vector<double> params() const;
    void set_params(std::span<const double> p);

    /// Softmax probabilities, classes x V.
    std::vector<double> probabilities(std::span<const double> features, std::size_t voxels) const;
    ProbVolume predict(const Tensor& image, const std::string& sample_id = {}) const;
    /// Mean and standard deviation of the hidden maps [p_c, p_c * intensity];
    /// length 4 * classes.
    std::vector<double> embed(const Tensor& image) const;

    Tensor to_tensor() const;
    static ToyModel from_tensor(const Tensor& t);

    bool operator==(const ToyModel&) const = default;
};

struct TrainingVolume {
    std::vector<double> features;  ///< kFeatures x n
    std::vector<int> labels;       ///< n
    std::size_t voxels = 0;
};

/// Subsamples every other voxel along each axis; `phase` picks the offset.
TrainingVolume training_volume(const Tensor& image, const Tensor& label, std::size_t classes, unsigned phase);

/// Closed-form Gaussian naive Bayes fit. Each class's voxels are split into
/// kComponents intensity quantile groups, one prototype per group.
ToyModel closed_form_fit(const std::vector<TrainingVolume>& data, std::size_t classes);

/// Cross-entropy plus foreground soft Dice, averaged over volumes for Dice.
/// Fills `grad` (param_count entries) when non-null.
double toy_loss(const ToyModel& m, const std::vector<TrainingVolume>& data, std::vector<double>* grad);

struct FitReport {
    ToyModel model;
    std::vector<double> loss_history;  ///< entry 0 is the starting loss
};

/// Full-batch Adam with step rejection: a step that raises the loss is
/// discarded and the learning rate halved, so the loss never increases.
FitReport toy_fit(const std::vector<TrainingVolume>& data, std::size_t classes, int epochs, const ToyModel* start,
                  double learning_rate = 0.2);

/// In-process TrainerAdapter over ToyModel files.
class ToyTrainer final : public al::TrainerAdapter {
public:
    explicit ToyTrainer(std::size_t classes) : classes_(classes) {}

    al::ModelHandle fit(const al::FitJob& job) override;
    EmbeddingVec embed(const al::ModelHandle& model, const std::string& sample_id, const fs::path& image,
                       int encoder_round) override;
    ProbVolume predict(const al::ModelHandle& model, const std::string& sample_id, const fs::path& image) override;

    std::size_t classes() const { return classes_; }

private:
    std::size_t classes_;
};

ToyModel load_toy_model(const fs::path& path);
void save_toy_model(const ToyModel& m, const fs::path& path);

/// Fits the stand-in pretrained model on every source-domain sample.
ToyModel pretrain_source(const al::DatasetManifest& dataset, std::size_t classes, int epochs);

}  // namespace asfda::bench
