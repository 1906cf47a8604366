#include "asfda/tables.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "asfda/errors.hpp"

namespace asfda {

namespace {

const std::vector<std::string> kQueryHeader{"sample_id", "pakd", "pd", "dkd", "asd", "dkd_qt", "asd_qt", "q", "round"};
const std::vector<std::string> kReliabilityHeader{"sample_id",   "confidence", "semantic_distance", "reliability",
                                                  "candidate",   "selected",   "round"};

void check_header(const CsvTable& t, const std::vector<std::string>& expected, const char* what) {
    require(t.header == expected, ErrorKind::Format, std::string("unexpected ") + what + " header");
    for (const auto& row : t.rows) {
        require(row.size() == expected.size(), ErrorKind::Format, std::string("ragged row in ") + what);
    }
}

int parse_int(const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
        v = std::stoi(s, &used);
    } catch (const std::exception&) {
        fail(ErrorKind::Format, "not an integer: '" + s + "'");
    }
    require(used == s.size(), ErrorKind::Format, "not an integer: '" + s + "'");
    return v;
}

bool parse_bool(const std::string& s) {
    if (s == "1" || s == "true") return true;
    if (s == "0" || s == "false") return false;
    fail(ErrorKind::Format, "not a boolean: '" + s + "'");
}

}  // namespace

std::string format_real(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

double parse_real(const std::string& s) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        fail(ErrorKind::Format, "not a number: '" + s + "'");
    }
    require(used == s.size(), ErrorKind::Format, "not a number: '" + s + "'");
    return v;
}

std::string render_csv(const CsvTable& t) {
    std::string out;
    auto emit = [&out](const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            require(fields[i].find_first_of(",\n\r\"") == std::string::npos, ErrorKind::Format,
                    "CSV field contains a reserved character: '" + fields[i] + "'");
            if (i) out += ',';
            out += fields[i];
        }
        out += '\n';
    };
    emit(t.header);
    for (const auto& row : t.rows) emit(row);
    return out;
}

CsvTable parse_csv(const std::string& text) {
    CsvTable t;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            auto comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (first) {
            t.header = std::move(fields);
            first = false;
        } else {
            t.rows.push_back(std::move(fields));
        }
    }
    require(!first, ErrorKind::Format, "CSV without a header");
    return t;
}

std::string render_query_table(const query::QueryScores& scores) {
    auto sorted = scores;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        if (a.q != b.q) return a.q > b.q;
        return a.sample_id < b.sample_id;
    });
    CsvTable t{kQueryHeader, {}};
    for (const auto& r : sorted) {
        t.rows.push_back({r.sample_id, format_real(r.pakd), format_real(r.pd), format_real(r.dkd), format_real(r.asd),
                          format_real(r.dkd_qt), format_real(r.asd_qt), format_real(r.q), std::to_string(r.round)});
    }
    return render_csv(t);
}

query::QueryScores parse_query_table(const std::string& text) {
    const auto t = parse_csv(text);
    check_header(t, kQueryHeader, "score table");
    query::QueryScores out;
    for (const auto& f : t.rows) {
        out.push_back({f[0], parse_real(f[1]), parse_real(f[2]), parse_real(f[3]), parse_real(f[4]), parse_real(f[5]),
                       parse_real(f[6]), parse_real(f[7]), parse_int(f[8])});
    }
    return out;
}

void write_query_table(const query::QueryScores& scores, const fs::path& path) {
    write_file_atomic(path, render_query_table(scores));
}

query::QueryScores read_query_table(const fs::path& path) { return parse_query_table(read_file(path)); }

std::string render_reliability_table(const std::vector<reliability::ReliabilityRow>& rows) {
    auto sorted = rows;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
    CsvTable t{kReliabilityHeader, {}};
    for (const auto& r : sorted) {
        t.rows.push_back({r.sample_id, format_real(r.confidence),
                          r.semantic_distance ? format_real(*r.semantic_distance) : std::string{},
                          r.reliability ? format_real(*r.reliability) : std::string{}, r.candidate ? "1" : "0",
                          r.selected ? "1" : "0", std::to_string(r.round)});
    }
    return render_csv(t);
}

std::vector<reliability::ReliabilityRow> parse_reliability_table(const std::string& text) {
    const auto t = parse_csv(text);
    check_header(t, kReliabilityHeader, "reliability table");
    std::vector<reliability::ReliabilityRow> out;
    for (const auto& f : t.rows) {
        reliability::ReliabilityRow r;
        r.sample_id = f[0];
        r.confidence = parse_real(f[1]);
        if (!f[2].empty()) r.semantic_distance = parse_real(f[2]);
        if (!f[3].empty()) r.reliability = parse_real(f[3]);
        r.candidate = parse_bool(f[4]);
        r.selected = parse_bool(f[5]);
        r.round = parse_int(f[6]);
        out.push_back(std::move(r));
    }
    return out;
}

void write_reliability_table(const std::vector<reliability::ReliabilityRow>& rows, const fs::path& path) {
    write_file_atomic(path, render_reliability_table(rows));
}

std::vector<reliability::ReliabilityRow> read_reliability_table(const fs::path& path) {
    return parse_reliability_table(read_file(path));
}

}  // namespace asfda
