#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "drnets/drscores.hpp"
#include "drnets/matrix.hpp"

/// Tabular data files. Headers: CATE `s1,...,sd,t,y`; DTE
/// `a1,...,a{d1},t1,b1,...,b{d2},t2,y`; CDE adds `m` before `y`. Reals are
/// written with 17 significant digits, so a load/save round trip is lossless.
namespace drnets::csvio {

std::string format_real(double v);

void write_cate(std::ostream& out, const CateData& data);
/// Writes the CDE layout when the data carry a mediator.
void write_dte(std::ostream& out, const DteData& data);

/// Throws SchemaError naming the first bad header column, InputError on bad rows.
CateData read_cate(std::istream& in);
DteData read_dte(std::istream& in, bool with_mediator);

/// Probe points: header `s1,...,sd`.
Matrix read_points(std::istream& in);

void write_cate_file(const std::string& path, const CateData& data);
void write_dte_file(const std::string& path, const DteData& data);
/// Throws IoError when the file cannot be opened.
CateData read_cate_file(const std::string& path);
DteData read_dte_file(const std::string& path, bool with_mediator);
Matrix read_points_file(const std::string& path);

}  // namespace drnets::csvio
