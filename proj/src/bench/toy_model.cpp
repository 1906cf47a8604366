#include "asfda/bench/toy_model.hpp"

#include <algorithm>
#include <cmath>

#include "asfda/bench/volume_ops.hpp"
#include "asfda/errors.hpp"

namespace asfda::bench {

namespace {

constexpr double kDiceEps = 1e-5;
constexpr double kVarFloor = 1e-2;
constexpr int kModelVersion = 1;
constexpr std::size_t kHeader = 5;

Extent extent_of(const Tensor& image) {
    require(image.ndim() == 3, ErrorKind::Dimension, "image tensor must be 3-D");
    return {image.shape()[0], image.shape()[1], image.shape()[2]};
}

double coord(std::size_t i, std::size_t n) { return n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5; }

// Class probabilities for one voxel; `resp` (prototypes entries, optional)
// receives each prototype's share of its class. `prec` holds exp(rho).
void softmax_voxel(const ToyModel& m, const double* prec, const double* f, std::size_t stride, double* p,
                   double* resp = nullptr) {
    double act[64];
    double top = -INFINITY;
    for (std::size_t c = 0; c < m.classes; ++c) {
        double best = -INFINITY;
        for (std::size_t j = 0; j < kComponents; ++j) {
            const std::size_t g = c * kComponents + j;
            double q = 0.0;
            for (std::size_t k = 0; k < kFeatures; ++k) {
                const double d = f[k * stride] - m.mu[g * kFeatures + k];
                q += prec[g * kFeatures + k] * d * d;
            }
            act[j] = m.bias[g] - 0.5 * q;
            best = std::max(best, act[j]);
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < kComponents; ++j) sum += std::exp(act[j] - best);
        if (resp) {
            for (std::size_t j = 0; j < kComponents; ++j) resp[c * kComponents + j] = std::exp(act[j] - best) / sum;
        }
        p[c] = (best + std::log(sum)) / m.temperature;
        top = std::max(top, p[c]);
    }
    double sum = 0.0;
    for (std::size_t c = 0; c < m.classes; ++c) {
        p[c] = std::exp(p[c] - top);
        sum += p[c];
    }
    for (std::size_t c = 0; c < m.classes; ++c) p[c] /= sum;
}

}  // namespace

std::vector<double> voxel_features(const Tensor& image) {
    const auto e = extent_of(image);
    const std::size_t n = e.voxels();
    std::vector<double> f(kFeatures * n);
    const auto smooth = box_smooth(image.data(), e, 1);
    double context = 0.0;
    for (double x : image.data()) context += x;
    context /= static_cast<double>(n);
    for (std::size_t i = 0; i < e.h; ++i) {
        for (std::size_t j = 0; j < e.w; ++j) {
            for (std::size_t l = 0; l < e.d; ++l) {
                const auto v = e.index(i, j, l);
                f[v] = image[v];
                f[n + v] = smooth[v];
                f[2 * n + v] = coord(i, e.h);
                f[3 * n + v] = coord(j, e.w);
                f[4 * n + v] = coord(l, e.d);
                f[5 * n + v] = context;
            }
        }
    }
    return f;
}

std::vector<double> ToyModel::params() const {
    std::vector<double> p;
    p.reserve(param_count());
    p.insert(p.end(), mu.begin(), mu.end());
    p.insert(p.end(), rho.begin(), rho.end());
    p.insert(p.end(), bias.begin(), bias.end());
    return p;
}

void ToyModel::set_params(std::span<const double> p) {
    require(p.size() == param_count(), ErrorKind::Dimension, "parameter vector length mismatch");
    const std::size_t ck = prototypes() * kFeatures;
    mu.assign(p.begin(), p.begin() + ck);
    rho.assign(p.begin() + ck, p.begin() + 2 * ck);
    bias.assign(p.begin() + 2 * ck, p.end());
}

std::vector<double> ToyModel::probabilities(std::span<const double> features, std::size_t voxels) const {
    require(features.size() == kFeatures * voxels, ErrorKind::Dimension, "feature block does not match voxel count");
    std::vector<double> out(classes * voxels);
    std::vector<double> p(classes), prec(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) prec[i] = std::exp(rho[i]);
    for (std::size_t v = 0; v < voxels; ++v) {
        softmax_voxel(*this, prec.data(), features.data() + v, voxels, p.data());
        for (std::size_t c = 0; c < classes; ++c) out[c * voxels + v] = p[c];
    }
    return out;
}

ProbVolume ToyModel::predict(const Tensor& image, const std::string& sample_id) const {
    const auto e = extent_of(image);
    return ProbVolume(classes, e, probabilities(voxel_features(image), e.voxels()), sample_id);
}

std::vector<double> ToyModel::embed(const Tensor& image) const {
    const auto e = extent_of(image);
    const std::size_t n = e.voxels();
    const auto p = probabilities(voxel_features(image), n);
    std::vector<double> out;
    out.reserve(4 * classes);
    std::vector<double> stds;
    for (int kind = 0; kind < 2; ++kind) {
        for (std::size_t c = 0; c < classes; ++c) {
            double s = 0.0, sq = 0.0;
            for (std::size_t v = 0; v < n; ++v) {
                const double h = kind == 0 ? p[c * n + v] : p[c * n + v] * image[v];
                s += h;
                sq += h * h;
            }
            const double mean = s / static_cast<double>(n);
            out.push_back(mean);
            stds.push_back(std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean)));
        }
    }
    out.insert(out.end(), stds.begin(), stds.end());
    return out;
}

Tensor ToyModel::to_tensor() const {
    std::vector<double> v{static_cast<double>(kModelVersion), static_cast<double>(classes),
                          static_cast<double>(kFeatures), static_cast<double>(kComponents), temperature};
    const auto p = params();
    v.insert(v.end(), p.begin(), p.end());
    const std::size_t n = v.size();
    return Tensor({n}, std::move(v));
}

ToyModel ToyModel::from_tensor(const Tensor& t) {
    require(t.ndim() == 1 && t.size() >= kHeader, ErrorKind::Format, "toy model tensor must be 1-D with a header");
    require(t[0] == kModelVersion, ErrorKind::Format, "unsupported toy model version");
    require(t[2] == static_cast<double>(kFeatures) && t[3] == static_cast<double>(kComponents), ErrorKind::Format,
            "toy model layout mismatch");
    ToyModel m;
    m.classes = static_cast<std::size_t>(t[1]);
    m.temperature = t[4];
    require(m.classes >= 2 && m.classes <= 16 && m.temperature > 0.0, ErrorKind::Format, "invalid toy model header");
    require(t.size() == kHeader + m.param_count(), ErrorKind::Corruption, "toy model payload length mismatch");
    m.set_params(t.data().subspan(kHeader));
    return m;
}

TrainingVolume training_volume(const Tensor& image, const Tensor& label, std::size_t classes, unsigned phase) {
    const auto e = extent_of(image);
    require(label.shape() == image.shape(), ErrorKind::Dimension, "label shape differs from image shape");
    const auto full = voxel_features(image);
    const std::size_t n = e.voxels();
    const std::size_t off[3] = {std::min<std::size_t>(phase & 1u, e.h - 1), std::min<std::size_t>((phase >> 1) & 1u, e.w - 1),
                                std::min<std::size_t>((phase >> 2) & 1u, e.d - 1)};
    std::vector<std::size_t> picked;
    for (std::size_t i = off[0]; i < e.h; i += 2)
        for (std::size_t j = off[1]; j < e.w; j += 2)
            for (std::size_t l = off[2]; l < e.d; l += 2) picked.push_back(e.index(i, j, l));

    TrainingVolume tv;
    tv.voxels = picked.size();
    tv.features.resize(kFeatures * tv.voxels);
    tv.labels.resize(tv.voxels);
    for (std::size_t s = 0; s < tv.voxels; ++s) {
        const auto v = picked[s];
        for (std::size_t k = 0; k < kFeatures; ++k) tv.features[k * tv.voxels + s] = full[k * n + v];
        const double y = label[v];
        require(y >= 0 && y < static_cast<double>(classes) && y == std::floor(y), ErrorKind::Domain,
                "label value outside [0, C)");
        tv.labels[s] = static_cast<int>(y);
    }
    return tv;
}

ToyModel closed_form_fit(const std::vector<TrainingVolume>& data, std::size_t classes) {
    require(!data.empty(), ErrorKind::Domain, "toy fit needs at least one labeled pair");
    require(classes >= 2, ErrorKind::Domain, "toy model needs at least two classes");
    // (intensity, volume, voxel) per class so each class can be cut into
    // intensity quantile groups
    std::vector<std::vector<std::pair<double, std::pair<std::size_t, std::size_t>>>> members(classes);
    std::vector<std::pair<std::size_t, std::size_t>> everyone;
    for (std::size_t t = 0; t < data.size(); ++t) {
        for (std::size_t s = 0; s < data[t].voxels; ++s) {
            members[static_cast<std::size_t>(data[t].labels[s])].push_back({data[t].features[s], {t, s}});
            everyone.push_back({t, s});
        }
    }
    const double total = static_cast<double>(everyone.size());

    auto stats = [&](auto first, auto last, auto pick, std::size_t g, double weight, ToyModel& m) {
        const double n = static_cast<double>(last - first);
        double log_det = 0.0;
        for (std::size_t k = 0; k < kFeatures; ++k) {
            double s = 0.0, q = 0.0;
            for (auto it = first; it != last; ++it) {
                const auto [t, v] = pick(*it);
                const double f = data[t].features[k * data[t].voxels + v];
                s += f;
                q += f * f;
            }
            const double mean = s / n;
            const double var = std::max(0.0, q / n - mean * mean) + kVarFloor;
            m.mu[g * kFeatures + k] = mean;
            m.rho[g * kFeatures + k] = -std::log(var);
            log_det += std::log(var);
        }
        m.bias[g] = std::log(weight) - 0.5 * log_det;
    };

    ToyModel m;
    m.classes = classes;
    m.mu.resize(m.prototypes() * kFeatures);
    m.rho.resize(m.prototypes() * kFeatures);
    m.bias.resize(m.prototypes());
    for (std::size_t c = 0; c < classes; ++c) {
        auto& mem = members[c];
        if (mem.size() < kComponents) {
            // absent or nearly absent: pooled statistics with a tiny prior
            for (std::size_t j = 0; j < kComponents; ++j)
                stats(everyone.begin(), everyone.end(), [](const auto& e) { return e; }, c * kComponents + j, 1e-3, m);
            continue;
        }
        std::stable_sort(mem.begin(), mem.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t j = 0; j < kComponents; ++j) {
            const auto lo = mem.begin() + static_cast<std::ptrdiff_t>(j * mem.size() / kComponents);
            const auto hi = mem.begin() + static_cast<std::ptrdiff_t>((j + 1) * mem.size() / kComponents);
            stats(lo, hi, [](const auto& e) { return e.second; }, c * kComponents + j,
                  static_cast<double>(hi - lo) / total, m);
        }
    }
    return m;
}

double toy_loss(const ToyModel& m, const std::vector<TrainingVolume>& data, std::vector<double>* grad) {
    require(!data.empty(), ErrorKind::Domain, "toy loss needs at least one training volume");
    const std::size_t C = m.classes;
    const std::size_t G = m.prototypes();
    const std::size_t gk = G * kFeatures;
    std::size_t total = 0;
    for (const auto& tv : data) total += tv.voxels;
    if (grad) grad->assign(m.param_count(), 0.0);

    double ce = 0.0, dice = 0.0;
    const double fg = static_cast<double>(C - 1);
    const double n_vol = static_cast<double>(data.size());
    std::vector<double> probs, resp, inter(C), denom(C), g(C), dz(C);
    std::vector<double> prec(gk);
    for (std::size_t i = 0; i < gk; ++i) prec[i] = std::exp(m.rho[i]);

    for (const auto& tv : data) {
        const std::size_t n = tv.voxels;
        probs.assign(C * n, 0.0);
        resp.assign(grad ? G * n : 0, 0.0);
        std::fill(inter.begin(), inter.end(), 0.0);
        std::fill(denom.begin(), denom.end(), 0.0);
        for (std::size_t s = 0; s < n; ++s) {
            double* p = probs.data() + s * C;
            softmax_voxel(m, prec.data(), tv.features.data() + s, n, p, grad ? resp.data() + s * G : nullptr);
            const auto y = static_cast<std::size_t>(tv.labels[s]);
            ce -= std::log(std::max(p[y], 1e-300));
            for (std::size_t c = 1; c < C; ++c) {
                inter[c] += y == c ? p[c] : 0.0;
                denom[c] += p[c] + (y == c ? 1.0 : 0.0);
            }
        }
        double vol_dice = 0.0;
        for (std::size_t c = 1; c < C; ++c) vol_dice += (2.0 * inter[c] + kDiceEps) / (denom[c] + kDiceEps);
        dice += 1.0 - vol_dice / fg;
        if (!grad) continue;

        for (std::size_t s = 0; s < n; ++s) {
            const double* p = probs.data() + s * C;
            const double* r = resp.data() + s * G;
            const auto y = static_cast<std::size_t>(tv.labels[s]);
            // dL/dp from the Dice term, background excluded
            double pg = 0.0;
            g[0] = 0.0;
            for (std::size_t c = 1; c < C; ++c) {
                const double den = denom[c] + kDiceEps;
                const double yc = y == c ? 1.0 : 0.0;
                g[c] = -(2.0 * yc * den - (2.0 * inter[c] + kDiceEps)) / (den * den) / (fg * n_vol);
                pg += p[c] * g[c];
            }
            for (std::size_t c = 0; c < C; ++c) {
                dz[c] = p[c] * (g[c] - pg) + (p[c] - (y == c ? 1.0 : 0.0)) / static_cast<double>(total);
                dz[c] /= m.temperature;
            }
            for (std::size_t q = 0; q < G; ++q) {
                const double da = dz[q / kComponents] * r[q];
                if (da == 0.0) continue;
                (*grad)[2 * gk + q] += da;
                for (std::size_t k = 0; k < kFeatures; ++k) {
                    const std::size_t i = q * kFeatures + k;
                    const double d = tv.features[k * n + s] - m.mu[i];
                    (*grad)[i] += da * prec[i] * d;
                    (*grad)[gk + i] += da * (-0.5 * prec[i] * d * d);
                }
            }
        }
    }
    return ce / static_cast<double>(total) + dice / n_vol;
}

FitReport toy_fit(const std::vector<TrainingVolume>& data, std::size_t classes, int epochs, const ToyModel* start,
                  double learning_rate) {
    require(!data.empty(), ErrorKind::Domain, "toy fit needs at least one labeled pair");
    require(epochs >= 0, ErrorKind::Domain, "epochs must be >= 0");
    FitReport rep;
    if (start) {
        require(start->classes == classes, ErrorKind::Dimension, "warm-start model has a different class count");
        rep.model = *start;
    } else {
        rep.model = closed_form_fit(data, classes);
    }

    std::vector<double> grad;
    double loss = toy_loss(rep.model, data, &grad);
    rep.loss_history.push_back(loss);

    auto theta = rep.model.params();
    std::vector<double> m1(theta.size(), 0.0), m2(theta.size(), 0.0);
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    double lr = learning_rate;
    int t = 0;
    ToyModel trial = rep.model;
    std::vector<double> trial_grad;
    for (int epoch = 0; epoch < epochs; ++epoch) {
        ++t;
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m1[i] = b1 * m1[i] + (1 - b1) * grad[i];
            m2[i] = b2 * m2[i] + (1 - b2) * grad[i] * grad[i];
        }
        const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
        auto proposal = theta;
        for (std::size_t i = 0; i < theta.size(); ++i) proposal[i] -= lr * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + eps);
        trial.set_params(proposal);
        const double trial_loss = toy_loss(trial, data, &trial_grad);
        if (std::isfinite(trial_loss) && trial_loss <= loss) {
            theta.swap(proposal);
            grad.swap(trial_grad);
            loss = trial_loss;
        } else {
            lr *= 0.5;
        }
        rep.loss_history.push_back(loss);
    }
    rep.model.set_params(theta);
    return rep;
}

ToyModel load_toy_model(const fs::path& path) { return ToyModel::from_tensor(read_tensor(path)); }

void save_toy_model(const ToyModel& m, const fs::path& path) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_tensor(m.to_tensor(), path);
}

al::ModelHandle ToyTrainer::fit(const al::FitJob& job) {
    require(!job.labeled.empty(), ErrorKind::Domain, "toy fit needs at least one labeled pair");
    std::vector<TrainingVolume> data;
    unsigned phase = static_cast<unsigned>(job.seed & 7u);
    for (const auto* group : {&job.labeled, &job.pseudo}) {
        for (const auto& pair : *group) {
            data.push_back(training_volume(read_tensor(pair.image), read_tensor(pair.label), classes_, phase));
        }
    }
    std::optional<ToyModel> start;
    if (job.warm_start) start = load_toy_model(*job.warm_start);
    const auto rep = toy_fit(data, classes_, job.epochs, start ? &*start : nullptr);
    save_toy_model(rep.model, job.output);
    return {job.output};
}

EmbeddingVec ToyTrainer::embed(const al::ModelHandle& model, const std::string& sample_id, const fs::path& image,
                               int encoder_round) {
    return EmbeddingVec(load_toy_model(model.path).embed(read_tensor(image)), sample_id, encoder_round);
}

ProbVolume ToyTrainer::predict(const al::ModelHandle& model, const std::string& sample_id, const fs::path& image) {
    return load_toy_model(model.path).predict(read_tensor(image), sample_id);
}

ToyModel pretrain_source(const al::DatasetManifest& dataset, std::size_t classes, int epochs) {
    std::vector<TrainingVolume> data;
    for (const auto& s : dataset.samples) {
        if (s.domain != "source" || !s.label) continue;
        data.push_back(training_volume(read_tensor(s.image), read_tensor(*s.label), classes, 0));
    }
    require(!data.empty(), ErrorKind::Domain, "dataset has no labeled source samples");
    return toy_fit(data, classes, epochs, nullptr).model;
}

}  // namespace asfda::bench
