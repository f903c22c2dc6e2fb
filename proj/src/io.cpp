#include "bayeshom/io.hpp"

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

namespace bayeshom {

std::string format_double(double value) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  while (first < last && (*first == ' ' || *first == '\t')) ++first;
  while (last > first && (last[-1] == ' ' || last[-1] == '\t' || last[-1] == '\r')) --last;
  auto res = std::from_chars(first, last, v);
  if (res.ec != std::errc() || res.ptr != last) throw InvalidArgument("cannot parse number '" + text + "'");
  return v;
}

void write_coefficient_csv(std::ostream& os, const CoefficientField& field) {
  os << (field.dim == 1 ? "cell_index,a11\n" : "cell_index,a11,a12,a22\n");
  for (std::size_t c = 0; c < field.values.size(); ++c) {
    const auto& t = field.values[c];
    os << c << ',' << format_double(t.a11);
    if (field.dim == 2) os << ',' << format_double(t.a12) << ',' << format_double(t.a22);
    os << '\n';
  }
}

CoefficientField read_coefficient_csv(std::istream& is, int dim) {
  std::string line;
  require(static_cast<bool>(std::getline(is, line)), "coefficient csv: missing header");
  std::vector<CellTensor> cells;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    require(fields.size() == (dim == 1 ? 2u : 4u), "coefficient csv: wrong column count in '" + line + "'");
    require(std::stoull(fields[0]) == cells.size(), "coefficient csv: cells out of order");
    CellTensor t;
    t.a11 = parse_double(fields[1]);
    if (dim == 2) {
      t.a12 = parse_double(fields[2]);
      t.a22 = parse_double(fields[3]);
    } else {
      t.a22 = t.a11;
    }
    cells.push_back(t);
  }
  return coefficient_from_cells(dim, std::move(cells));
}

namespace {

void write_node_prefix(std::ostream& os, const Mesh& mesh, Index k) {
  const Point& p = mesh.node(k);
  os << k << ',' << format_double(p[0]);
  if (mesh.dim() == 2) os << ',' << format_double(p[1]);
}

}  // namespace

void write_nodal_csv(std::ostream& os, const Mesh& mesh, const Matrix& columns, const std::string& name) {
  require(columns.rows() == mesh.num_nodes(), "write_nodal_csv: row count does not match mesh");
  os << (mesh.dim() == 1 ? "node_index,x" : "node_index,x,y");
  for (Index j = 0; j < columns.cols(); ++j) os << ',' << name << '_' << (j + 1);
  os << '\n';
  for (Index k = 0; k < columns.rows(); ++k) {
    write_node_prefix(os, mesh, k);
    for (Index j = 0; j < columns.cols(); ++j) os << ',' << format_double(columns(k, j));
    os << '\n';
  }
}

void write_variance_csv(std::ostream& os, const Mesh& mesh, const Vector& sigma2, const std::vector<Index>& nodes) {
  require(sigma2.size() == static_cast<Index>(nodes.size()), "write_variance_csv: size mismatch");
  os << (mesh.dim() == 1 ? "node_index,x,sigma2\n" : "node_index,x,y,sigma2\n");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    write_node_prefix(os, mesh, nodes[i]);
    os << ',' << format_double(sigma2(static_cast<Index>(i))) << '\n';
  }
}

void write_matrix_csv(std::ostream& os, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) {
      if (j) os << ',';
      os << format_double(m(i, j));
    }
    os << '\n';
  }
}

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace bayeshom
