#include "surfmet/micrograph_io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace surfmet::micro {

namespace {

static_assert(std::endian::native == std::endian::little,
              "height-map I/O assumes a little-endian host");

constexpr const char* kMagic = "SURFMET-HEIGHTMAP 1";

}  // namespace

void write_heightmap(const Micrograph& m, const std::string& path) {
    m.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("write_heightmap: cannot open '" + path + "'");
    out << kMagic << "\n"
        << "nx " << m.nx << "\n"
        << "ny " << m.ny << "\n"
        << "pixel_dx_um " << m.pixel_dx_um << "\n"
        << "pixel_dy_um " << m.pixel_dy_um << "\n"
        << "unit um\n"
        << "mask_encoding nan\n"
        << "data\n";
    std::vector<float> row(m.nx);
    for (std::size_t iy = 0; iy < m.ny; ++iy) {
        for (std::size_t ix = 0; ix < m.nx; ++ix)
            row[ix] = m.valid(ix, iy) ? static_cast<float>(m.at(ix, iy))
                                      : std::numeric_limits<float>::quiet_NaN();
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("write_heightmap: write failed for '" + path + "'");
}

Micrograph read_heightmap(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("read_heightmap: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line != kMagic)
        throw std::runtime_error("read_heightmap: bad magic in '" + path + "'");

    std::size_t nx = 0, ny = 0;
    double dx = 0.0, dy = 0.0;
    std::string mask_encoding = "nan";
    while (std::getline(in, line)) {
        if (line == "data") break;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (key == "nx") ls >> nx;
        else if (key == "ny") ls >> ny;
        else if (key == "pixel_dx_um") ls >> dx;
        else if (key == "pixel_dy_um") ls >> dy;
        else if (key == "mask_encoding") ls >> mask_encoding;
        else if (key == "unit") { std::string u; ls >> u;
            if (u != "um") throw std::runtime_error("read_heightmap: unsupported unit " + u); }
        else throw std::runtime_error("read_heightmap: unknown header key '" + key + "'");
        if (!ls) throw std::runtime_error("read_heightmap: malformed header line '" + line + "'");
    }
    if (nx == 0 || ny == 0 || dx <= 0.0 || dy <= 0.0)
        throw std::runtime_error("read_heightmap: incomplete header in '" + path + "'");

    Micrograph m = make_micrograph(nx, ny, dx, dy);
    std::vector<float> row(nx);
    for (std::size_t iy = 0; iy < ny; ++iy) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (!in) throw std::runtime_error("read_heightmap: truncated data in '" + path + "'");
        for (std::size_t ix = 0; ix < nx; ++ix) {
            if (mask_encoding == "nan" && std::isnan(row[ix])) {
                m.mask[iy * nx + ix] = 0;
                m.heights[iy * nx + ix] = std::numeric_limits<double>::quiet_NaN();
            } else {
                m.heights[iy * nx + ix] = static_cast<double>(row[ix]);
            }
        }
    }
    return m;
}

Micrograph read_csv_grid(const std::string& path, double pixel_dx_um, double pixel_dy_um) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("read_csv_grid: cannot open '" + path + "'");
    std::vector<std::vector<double>> rows;
    std::vector<std::vector<std::uint8_t>> masks;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> vals;
        std::vector<std::uint8_t> msk;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            // trim
            auto b = cell.find_first_not_of(" \t\r");
            auto e = cell.find_last_not_of(" \t\r");
            cell = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
            if (cell.empty() || cell == "nan" || cell == "NaN") {
                vals.push_back(std::numeric_limits<double>::quiet_NaN());
                msk.push_back(0);
                continue;
            }
            try {
                std::size_t used = 0;
                double v = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
                vals.push_back(v);
                msk.push_back(1);
            } catch (const std::exception&) {
                throw std::runtime_error("read_csv_grid: bad number '" + cell + "' at line " +
                                         std::to_string(lineno));
            }
        }
        if (!rows.empty() && vals.size() != rows.front().size())
            throw std::runtime_error("read_csv_grid: ragged row at line " +
                                     std::to_string(lineno));
        rows.push_back(std::move(vals));
        masks.push_back(std::move(msk));
    }
    if (rows.empty()) throw std::runtime_error("read_csv_grid: empty grid in '" + path + "'");
    Micrograph m = make_micrograph(rows.front().size(), rows.size(), pixel_dx_um, pixel_dy_um);
    for (std::size_t iy = 0; iy < m.ny; ++iy)
        for (std::size_t ix = 0; ix < m.nx; ++ix) {
            m.at(ix, iy) = rows[iy][ix];
            m.mask[iy * m.nx + ix] = masks[iy][ix];
        }
    return m;
}

}  // namespace surfmet::micro
