#include "asfda/bench/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>

#include <json.hpp>

#include "asfda/bench/volume_ops.hpp"
#include "asfda/errors.hpp"

namespace asfda::bench {

using nlohmann::json;

namespace {

std::mt19937_64 stream(std::uint64_t seed, int index, int purpose) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(purpose)};
    return std::mt19937_64(seq);
}

std::vector<double> smooth_noise(std::mt19937_64& rng, const Extent& e) {
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> field(e.voxels());
    for (auto& x : field) x = normal(rng);
    field = box_smooth(field, e, 2);
    field = box_smooth(field, e, 2);
    double mean = 0.0, sq = 0.0;
    for (double x : field) mean += x;
    mean /= static_cast<double>(field.size());
    for (double x : field) sq += (x - mean) * (x - mean);
    const double sd = std::sqrt(sq / static_cast<double>(field.size()));
    for (auto& x : field) x = (x - mean) / (sd > 0 ? sd : 1.0);
    return field;
}

struct Organ {
    double center[3];
    double radius[3];
    double intensity;
};

Organ organ_template(int k, int n_organs) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n_organs);
    Organ o{};
    o.center[0] = 0.5 + 0.24 * std::cos(angle);
    o.center[1] = 0.5 + 0.24 * std::sin(angle);
    o.center[2] = 0.5 + (k % 2 == 0 ? 0.08 : -0.08);
    const double base = 0.13 + 0.035 * static_cast<double>(k % 3);
    o.radius[0] = base;
    o.radius[1] = base * 1.15;
    o.radius[2] = base * 0.9;
    o.intensity = 1.0 + static_cast<double>(k);
    return o;
}

}  // namespace

bool SynthConfig::null_shift() const {
    const bool protocols_null =
        std::all_of(protocol_offsets.begin(), protocol_offsets.end(), [](double x) { return x == 0.0; }) &&
        std::all_of(protocol_contrasts.begin(), protocol_contrasts.end(), [](double x) { return x == 1.0; });
    return intensity_offset == 0.0 && noise_sigma == 0.0 && size_scale == 1.0 && size_jitter == 0.0 && protocols_null;
}

SynthConfig parse_synth_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("synthetic config is not valid JSON: ") + e.what());
    }
    SynthConfig c;
    try {
        if (j.contains("shape")) {
            auto s = j["shape"].get<std::vector<std::size_t>>();
            require(s.size() == 3, ErrorKind::Domain, "shape must have three entries");
            c.extent = {s[0], s[1], s[2]};
        }
        c.classes = j.value("classes", c.classes);
        c.samples_per_domain = j.value("samples_per_domain", c.samples_per_domain);
        c.seed = j.value("seed", c.seed);
        c.base_noise = j.value("base_noise", c.base_noise);
        c.texture = j.value("texture", c.texture);
        c.intensity_offset = j.value("intensity_offset", c.intensity_offset);
        c.noise_sigma = j.value("noise_sigma", c.noise_sigma);
        c.size_scale = j.value("size_scale", c.size_scale);
        c.protocol_weights = j.value("protocol_weights", c.protocol_weights);
        c.protocol_offsets = j.value("protocol_offsets", c.protocol_offsets);
        c.protocol_contrasts = j.value("protocol_contrasts", c.protocol_contrasts);
        c.size_jitter = j.value("size_jitter", c.size_jitter);
        c.heldout_fraction = j.value("heldout_fraction", c.heldout_fraction);
        c.allow_absent_classes = j.value("allow_absent_classes", c.allow_absent_classes);
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("synthetic config: ") + e.what());
    }
    require(c.classes >= 2, ErrorKind::Domain, "need at least two classes");
    require(c.extent.voxels() > 0, ErrorKind::Domain, "empty volume shape");
    require(c.samples_per_domain >= 1, ErrorKind::Domain, "need at least one sample per domain");
    require(!c.protocol_weights.empty() && c.protocol_weights.size() == c.protocol_offsets.size() &&
                c.protocol_weights.size() == c.protocol_contrasts.size(),
            ErrorKind::Domain, "protocol weights, offsets and contrasts must have equal non-zero length");
    require(c.heldout_fraction >= 0.0 && c.heldout_fraction < 1.0, ErrorKind::Domain, "heldout_fraction in [0,1)");
    return c;
}

std::string render_synth_config(const SynthConfig& c) {
    json j{{"shape", {c.extent.h, c.extent.w, c.extent.d}},
           {"classes", c.classes},
           {"samples_per_domain", c.samples_per_domain},
           {"seed", c.seed},
           {"base_noise", c.base_noise},
           {"texture", c.texture},
           {"intensity_offset", c.intensity_offset},
           {"noise_sigma", c.noise_sigma},
           {"size_scale", c.size_scale},
           {"protocol_weights", c.protocol_weights},
           {"protocol_offsets", c.protocol_offsets},
           {"protocol_contrasts", c.protocol_contrasts},
           {"size_jitter", c.size_jitter},
           {"heldout_fraction", c.heldout_fraction},
           {"allow_absent_classes", c.allow_absent_classes}};
    return j.dump(2) + "\n";
}

SynthVolume generate_volume(const SynthConfig& cfg, bool target, int index) {
    require(cfg.classes >= 2, ErrorKind::Domain, "need at least two classes");
    const Extent& e = cfg.extent;
    const int n_organs = cfg.classes - 1;

    // Geometry and base appearance come from a stream shared by both domains,
    // so a null shift reproduces the source volume exactly.
    auto rng = stream(cfg.seed, index, 1);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);

    double size = 1.0, offset = 0.0, contrast = 1.0;
    int protocol = -1;
    if (target) {
        auto shift_rng = stream(cfg.seed, index, 2);
        std::discrete_distribution<int> pick(cfg.protocol_weights.begin(), cfg.protocol_weights.end());
        std::uniform_real_distribution<double> jitter(-1.0, 1.0);
        protocol = pick(shift_rng);
        size = cfg.size_scale * (1.0 + cfg.size_jitter * jitter(shift_rng));
        offset = cfg.intensity_offset + cfg.protocol_offsets[static_cast<std::size_t>(protocol)];
        contrast = cfg.protocol_contrasts[static_cast<std::size_t>(protocol)];
    }

    std::vector<double> label(e.voxels(), 0.0);
    std::vector<double> image(e.voxels(), 0.0);
    const double scale[3] = {static_cast<double>(std::max<std::size_t>(e.h - 1, 1)),
                             static_cast<double>(std::max<std::size_t>(e.w - 1, 1)),
                             static_cast<double>(std::max<std::size_t>(e.d - 1, 1))};

    std::vector<Organ> organs;
    for (int k = 0; k < n_organs; ++k) {
        Organ o = organ_template(k, n_organs);
        const double r_jitter = 1.0 + 0.15 * unit(rng);
        for (int a = 0; a < 3; ++a) {
            o.center[a] += 0.06 * unit(rng);
            o.radius[a] *= r_jitter * size;
        }
        const auto noise = smooth_noise(rng, e);
        std::size_t assigned = 0;
        for (std::size_t i = 0; i < e.h; ++i) {
            for (std::size_t j = 0; j < e.w; ++j) {
                for (std::size_t l = 0; l < e.d; ++l) {
                    const double pos[3] = {i / scale[0], j / scale[1], l / scale[2]};
                    double r2 = 0.0;
                    for (int a = 0; a < 3; ++a) {
                        const double t = (pos[a] - o.center[a]) / o.radius[a];
                        r2 += t * t;
                    }
                    const auto v = e.index(i, j, l);
                    if (1.0 - r2 + 0.5 * noise[v] > 0.0 && label[v] == 0.0) {
                        label[v] = static_cast<double>(k + 1);
                        ++assigned;
                    }
                }
            }
        }
        if (assigned == 0 && !cfg.allow_absent_classes) {
            auto clampi = [](double x, std::size_t n) {
                return static_cast<std::size_t>(std::clamp(std::lround(x), 0L, static_cast<long>(n) - 1));
            };
            const auto v = e.index(clampi(o.center[0] * scale[0], e.h), clampi(o.center[1] * scale[1], e.w),
                                   clampi(o.center[2] * scale[2], e.d));
            label[v] = static_cast<double>(k + 1);
        }
        organs.push_back(o);
    }

    const auto texture = smooth_noise(rng, e);
    for (std::size_t v = 0; v < e.voxels(); ++v) {
        const int k = static_cast<int>(label[v]);
        const double base = k == 0 ? 0.0 : organs[static_cast<std::size_t>(k - 1)].intensity * contrast;
        image[v] = base + cfg.texture * texture[v] + cfg.base_noise * normal(rng) + offset;
    }
    if (target && cfg.noise_sigma > 0.0) {
        auto noise_rng = stream(cfg.seed, index, 3);
        for (auto& x : image) x += cfg.noise_sigma * normal(noise_rng);
    }

    return {Tensor({e.h, e.w, e.d}, std::move(image)), Tensor({e.h, e.w, e.d}, std::move(label)), protocol};
}

al::DatasetManifest generate_dataset(const SynthConfig& cfg, const fs::path& out_dir) {
    std::error_code ec;
    fs::create_directories(out_dir / "images", ec);
    fs::create_directories(out_dir / "labels", ec);
    require(!ec && fs::is_directory(out_dir), ErrorKind::Io, "cannot create output directory '" + out_dir.string() + "'");

    al::DatasetManifest m;
    const int heldout_every =
        cfg.heldout_fraction > 0.0 ? std::max(1, static_cast<int>(std::lround(1.0 / cfg.heldout_fraction))) : 0;
    for (int domain = 0; domain < 2; ++domain) {
        const bool target = domain == 1;
        for (int i = 0; i < cfg.samples_per_domain; ++i) {
            char id[16];
            std::snprintf(id, sizeof id, "%c%03d", target ? 't' : 's', i);
            const auto vol = generate_volume(cfg, target, i);
            al::SampleRecord rec;
            rec.id = id;
            rec.domain = target ? "target" : "source";
            rec.image = out_dir / "images" / (rec.id + ".asft");
            rec.label = out_dir / "labels" / (rec.id + ".asft");
            if (target && heldout_every > 0 && i % heldout_every == heldout_every - 1) rec.split = "heldout";
            write_tensor(vol.image, rec.image);
            write_tensor(vol.label, *rec.label);
            m.samples.push_back(std::move(rec));
        }
    }
    write_file_atomic(out_dir / "synth_config.json", render_synth_config(cfg));
    al::save_dataset_manifest(m, out_dir / "dataset.json");
    return m;
}

}  // namespace asfda::bench
