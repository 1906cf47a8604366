#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "asfda/tensor.hpp"
#include "oracles.hpp"

namespace th {

namespace fs = std::filesystem;

inline std::string id(int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "x%03d", i);
    return buf;
}

inline asfda::ProbVolume volume(const oracle::Vec& p, std::size_t C, asfda::Extent e, std::string sid = {}) {
    return asfda::ProbVolume(C, e, p, std::move(sid));
}

inline asfda::EmbeddingVec emb(const oracle::Vec& v, const std::string& sid, int round = 0) {
    return asfda::EmbeddingVec(v, sid, round);
}

inline asfda::ScoreVector scores(const std::vector<double>& v) {
    asfda::ScoreVector s;
    for (std::size_t i = 0; i < v.size(); ++i) s.add(id(static_cast<int>(i)), v[i]);
    return s;
}

// Fresh per-test scratch directory under the system temp dir.
inline fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("asfda_unit_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace th
