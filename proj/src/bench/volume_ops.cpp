#include "asfda/bench/volume_ops.hpp"

#include <algorithm>

#include "asfda/errors.hpp"

namespace asfda::bench {

namespace {

// One axis of the box filter. `stride` steps along the axis, `len` is its size.
void smooth_axis(std::vector<double>& data, const Extent& e, int axis, int radius) {
    const std::size_t dims[3] = {e.h, e.w, e.d};
    const std::size_t strides[3] = {e.w * e.d, e.d, 1};
    const std::size_t len = dims[axis];
    const std::size_t stride = strides[axis];
    std::vector<double> line(len), prefix(len + 1);
    std::vector<double> out(data.size());

    for (std::size_t i = 0; i < e.h; ++i) {
        for (std::size_t j = 0; j < e.w; ++j) {
            for (std::size_t k = 0; k < e.d; ++k) {
                const std::size_t pos[3] = {i, j, k};
                if (pos[axis] != 0) continue;
                const std::size_t base = e.index(i, j, k);
                prefix[0] = 0.0;
                for (std::size_t t = 0; t < len; ++t) {
                    line[t] = data[base + t * stride];
                    prefix[t + 1] = prefix[t] + line[t];
                }
                for (std::size_t t = 0; t < len; ++t) {
                    const std::size_t lo = t >= static_cast<std::size_t>(radius) ? t - radius : 0;
                    const std::size_t hi = std::min(len - 1, t + static_cast<std::size_t>(radius));
                    out[base + t * stride] = (prefix[hi + 1] - prefix[lo]) / static_cast<double>(hi - lo + 1);
                }
            }
        }
    }
    data.swap(out);
}

}  // namespace

std::vector<double> box_smooth(std::span<const double> volume, const Extent& e, int radius) {
    require(volume.size() == e.voxels(), ErrorKind::Dimension, "volume does not match extent");
    std::vector<double> data(volume.begin(), volume.end());
    if (radius <= 0) return data;
    for (int axis = 0; axis < 3; ++axis) smooth_axis(data, e, axis, radius);
    return data;
}

}  // namespace asfda::bench
