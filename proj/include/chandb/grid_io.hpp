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

#pragma once

#include "chandb/grid.hpp"

#include <filesystem>
#include <iosfwd>
#include <vector>

namespace chandb::io {

// Sample CSV: header `x1,x2,gain_db`, one sample per line.
std::vector<Sample> read_samples(std::istream& in);
std::vector<Sample> read_samples(const std::filesystem::path& path);
void write_samples(std::ostream& out, const std::vector<Sample>& samples);
void write_samples(const std::filesystem::path& path, const std::vector<Sample>& samples);

// Grid CSV: one line per row, comma-separated, printed with round-trip precision.
Matrix read_matrix(std::istream& in);
Matrix read_matrix(const std::filesystem::path& path);
void write_matrix(std::ostream& out, const Matrix& m);
void write_matrix(const std::filesystem::path& path, const Matrix& m);

Mask read_mask(const std::filesystem::path& path);
void write_mask(std::ostream& out, const Mask& m);
void write_mask(const std::filesystem::path& path, const Mask& m);

/// Writes the values CSV to `values_path` and the mask CSV next to it.
void write_grid(const std::filesystem::path& values_path, const std::filesystem::path& mask_path,
                const ChannelGrid& grid);

/// Loads a grid from a values CSV and a mask CSV; the shape must match `spec`.
ChannelGrid read_grid(const std::filesystem::path& values_path, const std::filesystem::path& mask_path,
                      const GridSpec& spec);

/// Binary 16-bit PGM heatmap. Valid cells are scaled affinely from [min, max]
/// of the valid values onto [1, 65535]; invalid cells are written as 0.
void write_pgm16(std::ostream& out, const Matrix& values, const Mask& mask);
void write_pgm16(const std::filesystem::path& path, const Matrix& values, const Mask& mask);

} // namespace chandb::io
