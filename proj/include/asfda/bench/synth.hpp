#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "asfda/io.hpp"
#include "asfda/orchestrator.hpp"
#include "asfda/tensor.hpp"

namespace asfda::bench {

/// Two-domain synthetic abdomen: smooth random organ blobs on a dark
/// background. Target volumes differ from source ones by an intensity offset,
/// extra noise and organ-size scaling; each target volume also draws its own
/// acquisition protocol, which moves its offset and contrast.
struct SynthConfig {
    Extent extent{24, 24, 24};
    int classes = 4;
    int samples_per_domain = 40;
    std::uint64_t seed = 0;

    double base_noise = 0.25;
    double texture = 0.2;

    double intensity_offset = 0.8;
    double noise_sigma = 0.2;
    double size_scale = 0.85;

    /// Target protocol mixture: per-protocol offset added on top of
    /// intensity_offset and a contrast multiplier on organ intensities.
    std::vector<double> protocol_weights{0.55, 0.3, 0.15};
    std::vector<double> protocol_offsets{0.0, 0.9, -0.7};
    std::vector<double> protocol_contrasts{1.0, 0.75, 1.3};
    double size_jitter = 0.15;

    double heldout_fraction = 0.25;
    bool allow_absent_classes = false;

    bool null_shift() const;
};

SynthConfig parse_synth_config(const std::string& json_text);
std::string render_synth_config(const SynthConfig& c);

struct SynthVolume {
    Tensor image;
    Tensor label;
    int protocol = -1;  ///< -1 for source volumes
};

SynthVolume generate_volume(const SynthConfig& cfg, bool target, int index);

/// Writes images/ and labels/ tensors plus dataset.json under `out_dir`.
/// Source ids are s000.., target ids t000..; every 1/heldout_fraction-th
/// target sample is marked split "heldout".
al::DatasetManifest generate_dataset(const SynthConfig& cfg, const fs::path& out_dir);

}  // namespace asfda::bench
