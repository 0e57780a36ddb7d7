#pragma once

#include <filesystem>

#include "gamblet/sparse.hpp"

namespace gamblet {

/// Reads a `matrix coordinate real {general|symmetric}` file (1-based indices).
/// Symmetric storage is expanded to both triangles. Any other header, a bad
/// line or an out-of-range index raises ParseError with the line number.
SparseMatrix mm_read(const std::filesystem::path& path);

/// Writes coordinate/real/general (or symmetric lower triangle when
/// `symmetric_storage` is set) with 17 significant digits.
void mm_write(const std::filesystem::path& path, const SparseMatrix& m, bool symmetric_storage = false);

/// Reads an n x 1 vector stored either as coordinate or as array.
Vector mm_read_vector(const std::filesystem::path& path);

/// Writes an n x 1 coordinate file holding every entry.
void mm_write_vector(const std::filesystem::path& path, std::span<const double> v);

}  // namespace gamblet
