#include "bayeshom/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <boost/random/normal_distribution.hpp>

namespace bayeshom {

Mesh::Mesh(int dim, int n) : dim_(dim), n_(n) {
  require(dim == 1 || dim == 2, "mesh: dim must be 1 or 2, got " + std::to_string(dim));
  require(n >= 2, "mesh: n must be at least 2, got " + std::to_string(n));
  h_ = 1.0 / n;
  weight_ = std::pow(h_, dim);
  const int m = n - 1;
  if (dim == 1) {
    nodes_.reserve(m);
    for (int ix = 1; ix <= m; ++ix) nodes_.push_back({ix * h_, 0.0});
  } else {
    nodes_.reserve(static_cast<std::size_t>(m) * m);
    for (int ix = 1; ix <= m; ++ix)
      for (int iy = 1; iy <= m; ++iy) nodes_.push_back({ix * h_, iy * h_});
  }
  weights_ = Vector::Constant(num_nodes(), weight_);
}

Index Mesh::num_cells() const noexcept { return dim_ == 1 ? n_ : static_cast<Index>(n_) * n_; }

Index Mesh::node_index(int ix, int iy) const noexcept {
  const int m = n_ - 1;
  if (ix < 1 || ix > m) return -1;
  if (dim_ == 1) return ix - 1;
  if (iy < 1 || iy > m) return -1;
  return static_cast<Index>(ix - 1) * m + (iy - 1);
}

Index Mesh::cell_index(int cx, int cy) const noexcept {
  if (dim_ == 1) return cx;
  return static_cast<Index>(cx) * n_ + cy;
}

Point Mesh::cell_center(Index cell) const {
  if (dim_ == 1) return {(static_cast<double>(cell) + 0.5) * h_, 0.0};
  const Index cx = cell / n_;
  const Index cy = cell % n_;
  return {(static_cast<double>(cx) + 0.5) * h_, (static_cast<double>(cy) + 0.5) * h_};
}

double Mesh::distance(const Point& a, const Point& b) const noexcept {
  const double dx = a[0] - b[0];
  if (dim_ == 1) return std::abs(dx);
  const double dy = a[1] - b[1];
  return std::sqrt(dx * dx + dy * dy);
}

Index Mesh::nearest_node(const Point& p) const {
  Index best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index k = 0; k < num_nodes(); ++k) {
    const double d = distance(p, nodes_[static_cast<std::size_t>(k)]);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

std::vector<Point> Mesh::closed_grid() const {
  std::vector<Point> pts;
  if (dim_ == 1) {
    for (int i = 0; i <= n_; ++i) pts.push_back({i * h_, 0.0});
  } else {
    for (int i = 0; i <= n_; ++i)
      for (int j = 0; j <= n_; ++j) pts.push_back({i * h_, j * h_});
  }
  return pts;
}

double Mesh::l2_inner(const Vector& u, const Vector& v) const {
  require(u.size() == num_nodes() && v.size() == num_nodes(), "l2_inner: size mismatch");
  return weight_ * u.dot(v);
}

double Mesh::l2_norm(const Vector& u) const { return std::sqrt(l2_inner(u, u)); }

Mesh build_mesh(int dim, int n) { return Mesh(dim, n); }

CoefficientSpec CoefficientSpec::constant(double c) {
  CoefficientSpec s;
  s.kind = CoefficientKind::Constant;
  s.value = c;
  return s;
}

CoefficientSpec CoefficientSpec::layered(double contrast, int layers) {
  CoefficientSpec s;
  s.kind = CoefficientKind::Layered;
  s.contrast = contrast;
  s.layers = layers;
  return s;
}

CoefficientSpec CoefficientSpec::checkerboard(double contrast, int block) {
  CoefficientSpec s;
  s.kind = CoefficientKind::Checkerboard;
  s.contrast = contrast;
  s.block = block;
  return s;
}

CoefficientSpec CoefficientSpec::lognormal_rough(std::uint64_t seed, double contrast) {
  CoefficientSpec s;
  s.kind = CoefficientKind::LognormalRough;
  s.seed = seed;
  s.contrast = contrast;
  return s;
}

std::pair<double, double> cell_eigenvalues(const CellTensor& t, int dim) {
  if (dim == 1) return {t.a11, t.a11};
  const double mean = 0.5 * (t.a11 + t.a22);
  const double diff = 0.5 * (t.a11 - t.a22);
  const double r = std::sqrt(diff * diff + t.a12 * t.a12);
  return {mean - r, mean + r};
}

CoefficientField coefficient_from_cells(int dim, std::vector<CellTensor> cells) {
  require(dim == 1 || dim == 2, "coefficient: dim must be 1 or 2");
  require(!cells.empty(), "coefficient: no cells");
  CoefficientField field;
  field.dim = dim;
  field.lambda_min = std::numeric_limits<double>::infinity();
  field.lambda_max = -std::numeric_limits<double>::infinity();
  for (const auto& t : cells) {
    require(std::isfinite(t.a11) && std::isfinite(t.a12) && std::isfinite(t.a22),
            "coefficient: non-finite cell value");
    const auto [lo, hi] = cell_eigenvalues(t, dim);
    field.lambda_min = std::min(field.lambda_min, lo);
    field.lambda_max = std::max(field.lambda_max, hi);
  }
  require(field.lambda_min > 0.0, "coefficient: field is not uniformly elliptic (lambda_min <= 0)");
  field.values = std::move(cells);
  return field;
}

namespace {

CellTensor isotropic(double a) { return {a, 0.0, a}; }

}  // namespace

CoefficientField make_coefficient(const Mesh& mesh, const CoefficientSpec& spec) {
  const Index cells = mesh.num_cells();
  const int n = mesh.cells_per_side();
  std::vector<CellTensor> values(static_cast<std::size_t>(cells));

  switch (spec.kind) {
    case CoefficientKind::Constant: {
      require(spec.value > 0.0 && std::isfinite(spec.value), "coefficient.value must be positive");
      std::fill(values.begin(), values.end(), isotropic(spec.value));
      break;
    }
    case CoefficientKind::Layered: {
      require(spec.contrast >= 1.0, "coefficient.contrast must be >= 1");
      require(spec.layers >= 1, "coefficient.layers must be >= 1");
      for (Index c = 0; c < cells; ++c) {
        const double x = mesh.cell_center(c)[0];
        const int layer = std::min(static_cast<int>(x * spec.layers), spec.layers - 1);
        values[static_cast<std::size_t>(c)] = isotropic(layer % 2 == 0 ? 1.0 : spec.contrast);
      }
      break;
    }
    case CoefficientKind::Checkerboard: {
      require(spec.contrast >= 1.0, "coefficient.contrast must be >= 1");
      require(spec.block >= 1, "coefficient.block must be >= 1");
      for (Index c = 0; c < cells; ++c) {
        const Index cx = mesh.dim() == 1 ? c : c / n;
        const Index cy = mesh.dim() == 1 ? 0 : c % n;
        const Index parity = (cx / spec.block + cy / spec.block) % 2;
        values[static_cast<std::size_t>(c)] = isotropic(parity == 0 ? 1.0 : spec.contrast);
      }
      break;
    }
    case CoefficientKind::LognormalRough: {
      require(spec.contrast >= 1.0, "coefficient.contrast must be >= 1");
      // log a ~ N(0, s^2) truncated at 3 standard deviations, s = ln(contrast)/6,
      // so that max/min over the field never exceeds the contrast.
      std::mt19937_64 rng(spec.seed);
      boost::random::normal_distribution<double> normal(0.0, 1.0);
      const double s = std::log(spec.contrast) / 6.0;
      for (auto& v : values) {
        const double z = std::clamp(normal(rng), -3.0, 3.0);
        v = isotropic(std::exp(s * z));
      }
      break;
    }
  }
  return coefficient_from_cells(mesh.dim(), std::move(values));
}

double mesh_norm(const Mesh& grid, std::span<const std::vector<Point>> supports) {
  require(!supports.empty(), "mesh_norm: no supports given");
  for (const auto& s : supports) require(!s.empty(), "mesh_norm: empty support");
  double H = 0.0;
  for (const Point& x : grid.closed_grid()) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& support : supports) {
      double far = 0.0;
      for (const Point& y : support) far = std::max(far, grid.distance(x, y));
      best = std::min(best, far);
    }
    H = std::max(H, best);
  }
  return H;
}

}  // namespace bayeshom
