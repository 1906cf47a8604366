#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace asfda {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);

/// Dense row-major tensor (last axis fastest). Values are held as double in
/// memory and stored as float32 on disk.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }

    std::span<const double> data() const { return data_; }
    std::span<double> data() { return data_; }
    std::vector<double>& storage() { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Spatial extent H x W x D of a volume.
struct Extent {
    std::size_t h = 0;
    std::size_t w = 0;
    std::size_t d = 0;

    std::size_t voxels() const { return h * w * d; }
    std::size_t index(std::size_t i, std::size_t j, std::size_t k) const { return (i * w + j) * d + k; }
    bool operator==(const Extent&) const = default;
};

class EmbeddingVec {
public:
    /// Rejects empty and zero-norm vectors.
    EmbeddingVec(std::vector<double> values, std::string sample_id, int encoder_round = 0);

    std::span<const double> values() const { return values_; }
    std::size_t dim() const { return values_.size(); }
    const std::string& sample_id() const { return sample_id_; }
    int encoder_round() const { return encoder_round_; }
    double norm() const { return norm_; }

    Tensor to_tensor() const;

private:
    std::vector<double> values_;
    std::string sample_id_;
    int encoder_round_;
    double norm_;
};

/// Per-voxel class probabilities, C x H x W x D, background at class 0.
class ProbVolume {
public:
    /// Validates [0,1] range and, unless `normalized` is false, that each
    /// voxel sums to 1 within 1e-5.
    ProbVolume(std::size_t classes, Extent extent, std::vector<double> probs, std::string sample_id = {},
               bool normalized = true);
    static ProbVolume from_tensor(const Tensor& t, std::string sample_id = {});

    std::size_t classes() const { return classes_; }
    const Extent& extent() const { return extent_; }
    std::size_t voxels() const { return extent_.voxels(); }
    const std::string& sample_id() const { return sample_id_; }
    bool normalized() const { return normalized_; }

    /// Probability of class `c` at flat voxel index `v`.
    double at(std::size_t c, std::size_t v) const { return probs_[c * extent_.voxels() + v]; }
    std::span<const double> channel(std::size_t c) const {
        return std::span<const double>(probs_).subspan(c * extent_.voxels(), extent_.voxels());
    }
    std::span<const double> data() const { return probs_; }

    Tensor to_tensor() const;

private:
    std::size_t classes_;
    Extent extent_;
    std::vector<double> probs_;
    std::string sample_id_;
    bool normalized_;
};

class BinaryMask {
public:
    explicit BinaryMask(Extent extent, std::vector<unsigned char> mask);
    static BinaryMask filled(Extent extent, bool value);
    static BinaryMask from_tensor(const Tensor& t);

    const Extent& extent() const { return extent_; }
    bool operator[](std::size_t v) const { return mask_[v] != 0; }
    std::size_t count() const;
    std::span<const unsigned char> data() const { return mask_; }

    Tensor to_tensor() const;
    bool operator==(const BinaryMask&) const = default;

private:
    Extent extent_;
    std::vector<unsigned char> mask_;
};

struct ScoreEntry {
    std::string sample_id;
    double score;
    bool operator==(const ScoreEntry&) const = default;
};

/// Column of per-sample scores with unique ids and finite values.
class ScoreVector {
public:
    ScoreVector() = default;
    explicit ScoreVector(std::vector<ScoreEntry> entries);

    void add(std::string sample_id, double score);

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::vector<ScoreEntry>& entries() const { return entries_; }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    bool contains(const std::string& id) const { return index_.count(id) != 0; }
    /// Throws a pairing error when `id` is absent.
    double at(const std::string& id) const;
    std::optional<double> find(const std::string& id) const;

    /// Same entries with a new score column, keeping ids and order.
    ScoreVector with_scores(std::span<const double> scores) const;
    std::vector<double> scores() const;

    /// Throws a pairing error when the two id sets differ.
    void require_same_ids(const ScoreVector& other) const;

    bool operator==(const ScoreVector& other) const { return entries_ == other.entries_; }

private:
    std::vector<ScoreEntry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace asfda
