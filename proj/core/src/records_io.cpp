#include "surfmet/records_io.hpp"

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace surfmet::io {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    for (auto& s : cells) {
        auto b = s.find_first_not_of(" \t");
        auto e = s.find_last_not_of(" \t");
        s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    }
    return cells;
}

double parse_num(const std::string& cell, const std::string& origin, std::size_t lineno,
                 const std::string& col) {
    try {
        std::size_t used = 0;
        double v = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                 ": malformed number '" + cell + "' in column " + col);
    }
}

}  // namespace

IngestResult ingest_csv_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;

    if (!std::getline(in, line))
        throw std::runtime_error(origin + ": empty file");
    ++lineno;
    auto header = split_csv_line(line);
    const std::vector<std::string> known = {"value_um", "instrument", "magnification",
                                            "area",     "day",        "seq",
                                            "measurand"};
    std::map<std::string, int> col;
    IngestResult res;
    for (std::size_t j = 0; j < header.size(); ++j) {
        bool recognised = false;
        for (const auto& k : known)
            if (header[j] == k) {
                col[k] = static_cast<int>(j);
                recognised = true;
            }
        if (!recognised && !header[j].empty())
            res.warnings.push_back(origin + ": ignoring unknown column '" + header[j] + "'");
    }
    for (const auto& required : {"value_um", "instrument", "area", "measurand"})
        if (!col.count(required))
            throw std::runtime_error(origin + ": missing required column '" +
                                     std::string(required) + "'");

    auto cell_at = [&](const std::vector<std::string>& cells, const std::string& name) {
        auto it = col.find(name);
        if (it == col.end() || it->second >= static_cast<int>(cells.size())) return std::string();
        return cells[static_cast<std::size_t>(it->second)];
    };

    bool any_row = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        auto cells = split_csv_line(line);
        if (cells.size() == 1 && cells[0].empty()) continue;
        MeasurementRecord r;
        r.value_um = parse_num(cell_at(cells, "value_um"), origin, lineno, "value_um");
        try {
            r.instrument = instrument_from_string(cell_at(cells, "instrument"));
            r.measurand = measurand_from_string(cell_at(cells, "measurand"));
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (auto c = cell_at(cells, "magnification"); !c.empty())
            r.magnification = parse_num(c, origin, lineno, "magnification");
        r.area = cell_at(cells, "area");
        if (auto c = cell_at(cells, "day"); !c.empty())
            r.day = static_cast<int>(parse_num(c, origin, lineno, "day"));
        if (auto c = cell_at(cells, "seq"); !c.empty())
            r.seq = static_cast<int>(parse_num(c, origin, lineno, "seq"));
        try {
            r.validate();
        } catch (const std::invalid_argument& e) {
            throw std::runtime_error(origin + ":" + std::to_string(lineno) + ": " + e.what());
        }
        res.records.push_back(std::move(r));
        any_row = true;
    }
    if (!any_row) throw std::runtime_error(origin + ": no data rows");
    return res;
}

IngestResult ingest_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("ingest_csv: cannot open '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return ingest_csv_text(buf.str(), path);
}

std::string to_csv_text(const std::vector<MeasurementRecord>& records) {
    std::ostringstream out;
    out.precision(17);
    out << "value_um,instrument,magnification,area,day,seq,measurand\n";
    for (const auto& r : records) {
        out << r.value_um << ',' << to_string(r.instrument) << ',';
        if (r.magnification) out << *r.magnification;
        out << ',' << r.area << ',';
        if (r.day) out << *r.day;
        out << ',';
        if (r.seq) out << *r.seq;
        out << ',' << to_string(r.measurand) << '\n';
    }
    return out.str();
}

void write_csv(const std::vector<MeasurementRecord>& records, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open '" + path + "'");
    out << to_csv_text(records);
}

}  // namespace surfmet::io
