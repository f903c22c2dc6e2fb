#ifndef BAYESHOM_IO_HPP
#define BAYESHOM_IO_HPP

#include <iosfwd>
#include <string>

#include "bayeshom/common.hpp"
#include "bayeshom/mesh.hpp"

namespace bayeshom {

/// Shortest decimal string that round-trips to the same binary64 value.
/// Locale independent.
std::string format_double(double value);

/// Parses a value written by format_double (or any C-locale decimal).
double parse_double(const std::string& text);

/// "cell_index,a11" in 1D, "cell_index,a11,a12,a22" in 2D.
void write_coefficient_csv(std::ostream& os, const CoefficientField& field);
CoefficientField read_coefficient_csv(std::istream& is, int dim);

/// "node_index,x[,y],<name>_1..<name>_N" with one column per matrix column.
void write_nodal_csv(std::ostream& os, const Mesh& mesh, const Matrix& columns, const std::string& name);

/// "node_index,x[,y],sigma2".
void write_variance_csv(std::ostream& os, const Mesh& mesh, const Vector& sigma2, const std::vector<Index>& nodes);

/// Plain dense matrix, one row per line, comma separated.
void write_matrix_csv(std::ostream& os, const Matrix& m);

/// FNV-1a 64-bit hash, rendered as 16 hex digits.
std::string fnv1a_hex(const std::string& bytes);

}  // namespace bayeshom

#endif  // BAYESHOM_IO_HPP
