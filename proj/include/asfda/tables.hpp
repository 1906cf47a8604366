#pragma once

#include <string>
#include <vector>

#include "asfda/io.hpp"
#include "asfda/query.hpp"
#include "asfda/reliability.hpp"

namespace asfda {

/// Reals in CSV files carry 9 significant digits.
std::string format_real(double v);
double parse_real(const std::string& s);

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

std::string render_csv(const CsvTable& t);
CsvTable parse_csv(const std::string& text);

/// `sample_id,pakd,pd,dkd,asd,dkd_qt,asd_qt,q,round`, rows sorted by q
/// descending then sample_id.
std::string render_query_table(const query::QueryScores& scores);
query::QueryScores parse_query_table(const std::string& text);
void write_query_table(const query::QueryScores& scores, const fs::path& path);
query::QueryScores read_query_table(const fs::path& path);

/// `sample_id,confidence,semantic_distance,reliability,candidate,selected,round`.
/// Non-candidates leave the distance and reliability fields empty.
std::string render_reliability_table(const std::vector<reliability::ReliabilityRow>& rows);
std::vector<reliability::ReliabilityRow> parse_reliability_table(const std::string& text);
void write_reliability_table(const std::vector<reliability::ReliabilityRow>& rows, const fs::path& path);
std::vector<reliability::ReliabilityRow> read_reliability_table(const fs::path& path);

}  // namespace asfda
