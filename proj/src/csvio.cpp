#include "drnets/csvio.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "drnets/error.hpp"

namespace drnets::csvio {
namespace {

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

// Walks a header left to right and checks it against the expected names.
class HeaderCursor {
 public:
  explicit HeaderCursor(std::vector<std::string> cols) : cols_(std::move(cols)) {}

  // Consumes prefix1, prefix2, ... and returns how many were present.
  std::size_t block(const std::string& prefix) {
    std::size_t k = 0;
    while (pos_ < cols_.size() && cols_[pos_] == prefix + std::to_string(k + 1)) {
      ++pos_;
      ++k;
    }
    if (k == 0) fail(prefix + "1");
    return k;
  }

  void expect(const std::string& name) {
    if (pos_ >= cols_.size() || cols_[pos_] != name) fail(name);
    ++pos_;
  }

  void finish() {
    if (pos_ != cols_.size())
      throw SchemaError("unexpected column '" + cols_[pos_] + "' at position " +
                            std::to_string(pos_ + 1),
                        cols_[pos_]);
  }

  std::size_t size() const { return cols_.size(); }

 private:
  [[noreturn]] void fail(const std::string& expected) {
    if (pos_ >= cols_.size())
      throw SchemaError("missing column '" + expected + "'", expected);
    throw SchemaError("column " + std::to_string(pos_ + 1) + ": expected '" + expected +
                          "', found '" + cols_[pos_] + "'",
                      cols_[pos_]);
  }

  std::vector<std::string> cols_;
  std::size_t pos_ = 0;
};

double parse_real(const std::string& cell, std::size_t line, std::size_t col) {
  double v = 0.0;
  const char* end = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(cell.data(), end, v);
  if (ec != std::errc() || ptr != end || cell.empty())
    throw InputError("line " + std::to_string(line) + ", column " + std::to_string(col) +
                     ": not a number: '" + cell + "'");
  return v;
}

int parse_binary(const std::string& cell, std::size_t line, std::size_t col) {
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  throw InputError("line " + std::to_string(line) + ", column " + std::to_string(col) +
                   ": expected 0 or 1, found '" + cell + "'");
}

std::vector<std::string> read_header(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw SchemaError("empty file: no header", "");
  return split(strip_cr(line));
}

// Calls row(fields, line_number) for every non-empty data line.
template <class RowFn>
void for_rows(std::istream& in, std::size_t width, RowFn&& row) {
  std::string line;
  std::size_t number = 1;
  while (std::getline(in, line)) {
    ++number;
    line = strip_cr(line);
    if (line.empty()) continue;
    auto fields = split(line);
    if (fields.size() != width)
      throw InputError("line " + std::to_string(number) + ": expected " + std::to_string(width) +
                       " fields, found " + std::to_string(fields.size()));
    row(fields, number);
  }
}

void write_block(std::ostream& out, const std::string& prefix, std::size_t k) {
  for (std::size_t j = 1; j <= k; ++j) out << prefix << j << ',';
}

void write_reals(std::ostream& out, std::span<const double> v) {
  for (double x : v) out << format_real(x) << ',';
}

std::ifstream open_in(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return in;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

}  // namespace

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_cate(std::ostream& out, const CateData& data) {
  write_block(out, "s", data.dim());
  out << "t,y\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    write_reals(out, data.s.row(i));
    out << data.t[i] << ',' << format_real(data.y[i]) << '\n';
  }
}

void write_dte(std::ostream& out, const DteData& data) {
  write_block(out, "a", data.s1.cols());
  out << "t1,";
  write_block(out, "b", data.s2.cols());
  out << (data.has_mediator() ? "t2,m,y\n" : "t2,y\n");
  for (std::size_t i = 0; i < data.size(); ++i) {
    write_reals(out, data.s1.row(i));
    out << data.t1[i] << ',';
    write_reals(out, data.s2.row(i));
    out << data.t2[i] << ',';
    if (data.has_mediator()) out << data.m[i] << ',';
    out << format_real(data.y[i]) << '\n';
  }
}

CateData read_cate(std::istream& in) {
  HeaderCursor h(read_header(in));
  const std::size_t d = h.block("s");
  h.expect("t");
  h.expect("y");
  h.finish();
  CateData data;
  data.s = Matrix(0, d);
  for_rows(in, d + 2, [&](const std::vector<std::string>& f, std::size_t line) {
    CateObservation o;
    for (std::size_t j = 0; j < d; ++j) o.s.push_back(parse_real(f[j], line, j + 1));
    o.t = parse_binary(f[d], line, d + 1);
    o.y = parse_real(f[d + 1], line, d + 2);
    data.push_back(o);
  });
  data.validate();
  return data;
}

DteData read_dte(std::istream& in, bool with_mediator) {
  HeaderCursor h(read_header(in));
  const std::size_t d1 = h.block("a");
  h.expect("t1");
  const std::size_t d2 = h.block("b");
  h.expect("t2");
  if (with_mediator) h.expect("m");
  h.expect("y");
  h.finish();
  DteData data;
  data.s1 = Matrix(0, d1);
  data.s2 = Matrix(0, d2);
  for_rows(in, h.size(), [&](const std::vector<std::string>& f, std::size_t line) {
    DteObservation o;
    std::size_t c = 0;
    for (std::size_t j = 0; j < d1; ++j, ++c) o.s1.push_back(parse_real(f[c], line, c + 1));
    o.t1 = parse_binary(f[c], line, c + 1);
    ++c;
    for (std::size_t j = 0; j < d2; ++j, ++c) o.s2.push_back(parse_real(f[c], line, c + 1));
    o.t2 = parse_binary(f[c], line, c + 1);
    ++c;
    if (with_mediator) {
      o.m = parse_binary(f[c], line, c + 1);
      ++c;
    }
    o.y = parse_real(f[c], line, c + 1);
    data.push_back(o);
  });
  data.validate();
  return data;
}

Matrix read_points(std::istream& in) {
  HeaderCursor h(read_header(in));
  const std::size_t d = h.block("s");
  h.finish();
  Matrix X(0, d);
  for_rows(in, d, [&](const std::vector<std::string>& f, std::size_t line) {
    std::vector<double> r;
    for (std::size_t j = 0; j < d; ++j) r.push_back(parse_real(f[j], line, j + 1));
    X.push_row(r);
  });
  return X;
}

void write_cate_file(const std::string& path, const CateData& data) {
  auto out = open_out(path);
  write_cate(out, data);
  if (!out) throw IoError("write to '" + path + "' failed");
}

void write_dte_file(const std::string& path, const DteData& data) {
  auto out = open_out(path);
  write_dte(out, data);
  if (!out) throw IoError("write to '" + path + "' failed");
}

CateData read_cate_file(const std::string& path) {
  auto in = open_in(path);
  return read_cate(in);
}

DteData read_dte_file(const std::string& path, bool with_mediator) {
  auto in = open_in(path);
  return read_dte(in, with_mediator);
}

Matrix read_points_file(const std::string& path) {
  auto in = open_in(path);
  return read_points(in);
}

}  // namespace drnets::csvio
