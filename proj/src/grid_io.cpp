// SPDX-License-Identifier: Apache-2.0
//
// chandb: channel database construction and interpolation
// Copyright (C) 2026 The chandb authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------

#include "chandb/grid_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>

namespace chandb::io {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        out.push_back(trim(line.substr(start, comma - start)));
        if (comma == std::string_view::npos) {
            break;
        }
        start = comma + 1;
    }
    return out;
}

double parse_double(std::string_view field, std::size_t line_no) {
    double value = 0.0;
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc() || ptr != end) {
        std::ostringstream msg;
        msg << "line " << line_no << ": cannot parse number '" << field << "'";
        throw std::runtime_error(msg.str());
    }
    return value;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string() + " for reading");
    }
    return in;
}

std::ofstream open_out(const std::filesystem::path& path, std::ios::openmode mode = std::ios::out) {
    std::ofstream out(path, mode);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    return out;
}

void put_double(std::ostream& out, double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, res.ptr - buf);
}

} // namespace

std::vector<Sample> read_samples(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    std::vector<Sample> samples;
    while (std::getline(in, line)) {
        ++line_no;
        auto view = trim(line);
        if (line_no == 1 && view.starts_with("\xEF\xBB\xBF")) {
            view.remove_prefix(3);
        }
        if (view.empty()) {
            continue;
        }
        const auto fields = split_fields(view);
        if (!have_header) {
            if (fields.size() != 3 || fields[0] != "x1" || fields[1] != "x2" || fields[2] != "gain_db") {
                throw std::runtime_error("sample CSV: expected header 'x1,x2,gain_db'");
            }
            have_header = true;
            continue;
        }
        if (fields.size() != 3) {
            throw std::runtime_error("sample CSV line " + std::to_string(line_no) + ": expected 3 fields");
        }
        Sample s{parse_double(fields[0], line_no), parse_double(fields[1], line_no),
                 parse_double(fields[2], line_no)};
        if (!std::isfinite(s.x1) || !std::isfinite(s.x2) || !std::isfinite(s.gain_db)) {
            throw std::runtime_error("sample CSV line " + std::to_string(line_no) + ": non-finite value");
        }
        samples.push_back(s);
    }
    if (!have_header) {
        throw std::runtime_error("sample CSV: missing header");
    }
    return samples;
}

std::vector<Sample> read_samples(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_samples(in);
}

void write_samples(std::ostream& out, const std::vector<Sample>& samples) {
    out << "x1,x2,gain_db\n";
    for (const auto& s : samples) {
        put_double(out, s.x1);
        out << ',';
        put_double(out, s.x2);
        out << ',';
        put_double(out, s.gain_db);
        out << '\n';
    }
}

void write_samples(const std::filesystem::path& path, const std::vector<Sample>& samples) {
    auto out = open_out(path);
    write_samples(out, samples);
}

Matrix read_matrix(std::istream& in) {
    std::string line;
    std::size_t line_no = 0;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++line_no;
        const auto view = trim(line);
        if (view.empty()) {
            continue;
        }
        std::vector<double> row;
        for (const auto f : split_fields(view)) {
            row.push_back(parse_double(f, line_no));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw std::runtime_error("grid CSV line " + std::to_string(line_no) + ": ragged row");
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw std::runtime_error("grid CSV: no data");
    }
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return m;
}

Matrix read_matrix(const std::filesystem::path& path) {
    auto in = open_in(path);
    return read_matrix(in);
}

void write_matrix(std::ostream& out, const Matrix& m) {
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j > 0) {
                out << ',';
            }
            put_double(out, m(i, j));
        }
        out << '\n';
    }
}

void write_matrix(const std::filesystem::path& path, const Matrix& m) {
    auto out = open_out(path);
    write_matrix(out, m);
}

Mask read_mask(const std::filesystem::path& path) {
    const Matrix m = read_matrix(path);
    Mask mask(m.rows(), m.cols());
    for (Index i = 0; i < m.size(); ++i) {
        const double v = m.data()[i];
        if (v != 0.0 && v != 1.0) {
            throw std::runtime_error("mask CSV " + path.string() + ": entries must be 0 or 1");
        }
        mask.data()[i] = static_cast<std::uint8_t>(v);
    }
    return mask;
}

void write_mask(std::ostream& out, const Mask& m) {
    for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
            if (j > 0) {
                out << ',';
            }
            out << static_cast<int>(m(i, j));
        }
        out << '\n';
    }
}

void write_mask(const std::filesystem::path& path, const Mask& m) {
    auto out = open_out(path);
    write_mask(out, m);
}

void write_grid(const std::filesystem::path& values_path, const std::filesystem::path& mask_path,
                const ChannelGrid& grid) {
    write_matrix(values_path, grid.values);
    write_mask(mask_path, grid.mask);
}

ChannelGrid read_grid(const std::filesystem::path& values_path, const std::filesystem::path& mask_path,
                      const GridSpec& spec) {
    return ChannelGrid(spec, read_matrix(values_path), read_mask(mask_path));
}

void write_pgm16(std::ostream& out, const Matrix& values, const Mask& mask) {
    if (values.rows() != mask.rows() || values.cols() != mask.cols()) {
        throw std::invalid_argument("write_pgm16: values and mask differ in shape");
    }
    double lo = INFINITY;
    double hi = -INFINITY;
    for (Index i = 0; i < values.size(); ++i) {
        if (mask.data()[i] != 0) {
            lo = std::min(lo, values.data()[i]);
            hi = std::max(hi, values.data()[i]);
        }
    }
    out << "P5\n" << values.cols() << ' ' << values.rows() << "\n65535\n";
    for (Index i = 0; i < values.size(); ++i) {
        std::uint16_t level = 0;
        if (mask.data()[i] != 0) {
            const double t = hi > lo ? (values.data()[i] - lo) / (hi - lo) : 1.0;
            level = static_cast<std::uint16_t>(std::lround(1.0 + t * 65534.0));
        }
        const char bytes[2] = {static_cast<char>(level >> 8), static_cast<char>(level & 0xff)};
        out.write(bytes, 2);
    }
}

void write_pgm16(const std::filesystem::path& path, const Matrix& values, const Mask& mask) {
    auto out = open_out(path, std::ios::out | std::ios::binary);
    write_pgm16(out, values, mask);
}

} // namespace chandb::io
