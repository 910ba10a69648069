#pragma once

#include <string>
#include <vector>

#include "surfmet/types.hpp"

// CSV ingestion and emission of measurement records. Expected header:
//   value_um,instrument,magnification,area,day,seq,measurand
// day/seq/magnification may be empty; unknown extra columns are skipped with
// a warning; malformed cells are reported with their line number.

namespace surfmet::io {

struct IngestResult {
    std::vector<MeasurementRecord> records;
    std::vector<std::string> warnings;
};

IngestResult ingest_csv(const std::string& path);
IngestResult ingest_csv_text(const std::string& text, const std::string& origin = "<memory>");

void write_csv(const std::vector<MeasurementRecord>& records, const std::string& path);
std::string to_csv_text(const std::vector<MeasurementRecord>& records);

}  // namespace surfmet::io
