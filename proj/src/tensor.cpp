#include "asfda/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asfda/errors.hpp"

namespace asfda {

const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Dimension: return "dimension";
        case ErrorKind::Domain: return "domain";
        case ErrorKind::EmptyInput: return "empty-input";
        case ErrorKind::Pairing: return "pairing";
        case ErrorKind::Budget: return "budget";
        case ErrorKind::Exhaustion: return "exhaustion";
        case ErrorKind::Format: return "format";
        case ErrorKind::Corruption: return "corruption";
        case ErrorKind::Io: return "I/O";
        case ErrorKind::Adapter: return "adapter";
    }
    return "unknown";
}

int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Adapter: return 3;
        case ErrorKind::Io:
        case ErrorKind::Format:
        case ErrorKind::Corruption: return 4;
        default: return 2;
    }
}

std::size_t element_count(const Shape& shape) {
    if (shape.empty()) return 0;
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    require(data_.size() == element_count(shape_), ErrorKind::Dimension,
            "tensor payload of " + std::to_string(data_.size()) + " values does not match shape");
}

EmbeddingVec::EmbeddingVec(std::vector<double> values, std::string sample_id, int encoder_round)
    : values_(std::move(values)), sample_id_(std::move(sample_id)), encoder_round_(encoder_round) {
    require(!values_.empty(), ErrorKind::Dimension, "embedding must have at least one feature");
    require(encoder_round_ >= 0, ErrorKind::Domain, "encoder round must be >= 0");
    double sq = 0.0;
    for (double v : values_) {
        require(std::isfinite(v), ErrorKind::Domain, "embedding of '" + sample_id_ + "' is not finite");
        sq += v * v;
    }
    norm_ = std::sqrt(sq);
    require(norm_ > 0.0, ErrorKind::Domain, "embedding of '" + sample_id_ + "' has zero norm");
}

Tensor EmbeddingVec::to_tensor() const { return Tensor({values_.size()}, values_); }

ProbVolume::ProbVolume(std::size_t classes, Extent extent, std::vector<double> probs, std::string sample_id,
                       bool normalized)
    : classes_(classes), extent_(extent), probs_(std::move(probs)), sample_id_(std::move(sample_id)),
      normalized_(normalized) {
    require(classes_ >= 1 && extent_.voxels() >= 1, ErrorKind::Dimension, "probability volume is empty");
    require(probs_.size() == classes_ * extent_.voxels(), ErrorKind::Dimension,
            "probability payload does not match C x H x W x D");
    for (double p : probs_) {
        require(p >= 0.0 && p <= 1.0, ErrorKind::Domain, "probability outside [0,1]");
    }
    if (!normalized_) return;
    const std::size_t n = extent_.voxels();
    for (std::size_t v = 0; v < n; ++v) {
        double sum = 0.0;
        for (std::size_t c = 0; c < classes_; ++c) sum += probs_[c * n + v];
        require(std::abs(sum - 1.0) <= 1e-5, ErrorKind::Domain,
                "voxel " + std::to_string(v) + " probabilities sum to " + std::to_string(sum));
    }
}

ProbVolume ProbVolume::from_tensor(const Tensor& t, std::string sample_id) {
    require(t.ndim() == 4, ErrorKind::Dimension, "probability tensor must be 4-D (C x H x W x D)");
    const auto& s = t.shape();
    return ProbVolume(s[0], Extent{s[1], s[2], s[3]}, std::vector<double>(t.data().begin(), t.data().end()),
                      std::move(sample_id));
}

Tensor ProbVolume::to_tensor() const { return Tensor({classes_, extent_.h, extent_.w, extent_.d}, probs_); }

BinaryMask::BinaryMask(Extent extent, std::vector<unsigned char> mask) : extent_(extent), mask_(std::move(mask)) {
    require(mask_.size() == extent_.voxels(), ErrorKind::Dimension, "mask payload does not match H x W x D");
    for (auto m : mask_) require(m <= 1, ErrorKind::Domain, "mask values must be 0 or 1");
}

BinaryMask BinaryMask::filled(Extent extent, bool value) {
    return BinaryMask(extent, std::vector<unsigned char>(extent.voxels(), value ? 1 : 0));
}

BinaryMask BinaryMask::from_tensor(const Tensor& t) {
    require(t.ndim() == 3, ErrorKind::Dimension, "mask tensor must be 3-D");
    std::vector<unsigned char> m(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) {
        require(t[i] == 0.0 || t[i] == 1.0, ErrorKind::Format, "mask file values must be exactly 0.0 or 1.0");
        m[i] = t[i] == 1.0 ? 1 : 0;
    }
    return BinaryMask(Extent{t.shape()[0], t.shape()[1], t.shape()[2]}, std::move(m));
}

std::size_t BinaryMask::count() const { return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), 1)); }

Tensor BinaryMask::to_tensor() const {
    std::vector<double> v(mask_.begin(), mask_.end());
    return Tensor({extent_.h, extent_.w, extent_.d}, std::move(v));
}

ScoreVector::ScoreVector(std::vector<ScoreEntry> entries) {
    entries_.reserve(entries.size());
    for (auto& e : entries) add(std::move(e.sample_id), e.score);
}

void ScoreVector::add(std::string sample_id, double score) {
    require(std::isfinite(score), ErrorKind::Domain, "score for '" + sample_id + "' is not finite");
    require(index_.count(sample_id) == 0, ErrorKind::Pairing, "duplicate sample id '" + sample_id + "'");
    index_.emplace(sample_id, entries_.size());
    entries_.push_back({std::move(sample_id), score});
}

double ScoreVector::at(const std::string& id) const {
    auto it = index_.find(id);
    require(it != index_.end(), ErrorKind::Pairing, "no score for sample '" + id + "'");
    return entries_[it->second].score;
}

std::optional<double> ScoreVector::find(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) return std::nullopt;
    return entries_[it->second].score;
}

ScoreVector ScoreVector::with_scores(std::span<const double> scores) const {
    require(scores.size() == entries_.size(), ErrorKind::Dimension, "score column length mismatch");
    ScoreVector out;
    for (std::size_t i = 0; i < entries_.size(); ++i) out.add(entries_[i].sample_id, scores[i]);
    return out;
}

std::vector<double> ScoreVector::scores() const {
    std::vector<double> s;
    s.reserve(entries_.size());
    for (const auto& e : entries_) s.push_back(e.score);
    return s;
}

void ScoreVector::require_same_ids(const ScoreVector& other) const {
    require(size() == other.size(), ErrorKind::Pairing, "score columns cover different sample sets");
    for (const auto& e : entries_) {
        require(other.contains(e.sample_id), ErrorKind::Pairing, "sample '" + e.sample_id + "' missing in paired column");
    }
}

}  // namespace asfda
