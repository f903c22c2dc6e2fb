#include "bayeshom/measure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <set>

#include <Eigen/QR>

#include "bayeshom/io.hpp"

namespace bayeshom {

const char* to_string(MeasurementKind kind) noexcept {
  switch (kind) {
    case MeasurementKind::Dirac: return "dirac";
    case MeasurementKind::VoronoiIndicator: return "voronoi_indicator";
    case MeasurementKind::Density: return "density";
  }
  return "unknown";
}

MeasurementSet::MeasurementSet(const Mesh& mesh, MeasurementKind kind, Matrix dual,
                               std::vector<Point> anchors)
    : kind_(kind), dual_(std::move(dual)), anchors_(std::move(anchors)) {
  require(dual_.cols() >= 1, "measurements: need at least one functional");
  require(dual_.rows() == mesh.num_nodes(), "measurements: dual vectors do not match mesh size");
  require(dual_.allFinite(), "measurements: non-finite dual vector entries");

  constraints_ = dual_.transpose() * mesh.weight();
  supports_.resize(static_cast<std::size_t>(dual_.cols()));
  for (Index i = 0; i < dual_.cols(); ++i) {
    for (Index k = 0; k < dual_.rows(); ++k)
      if (dual_(k, i) != 0.0) supports_[static_cast<std::size_t>(i)].push_back(k);
    require(!supports_[static_cast<std::size_t>(i)].empty(),
            "measurements: functional " + std::to_string(i) + " is identically zero");
  }

  if (kind_ == MeasurementKind::Dirac) {
    for (const auto& s : supports_) {
      require(s.size() == 1, "measurements: a Dirac dual vector must have a single node");
      dirac_nodes_.push_back(s.front());
    }
  }

  Eigen::ColPivHouseholderQR<Matrix> qr(dual_);
  if (qr.rank() < dual_.cols())
    throw InvalidArgument("measurements: functionals are linearly dependent (rank " + std::to_string(qr.rank()) +
                          " < " + std::to_string(dual_.cols()) + ")");
}

std::vector<std::vector<Point>> MeasurementSet::support_points(const Mesh& mesh) const {
  std::vector<std::vector<Point>> out;
  out.reserve(supports_.size());
  for (const auto& s : supports_) {
    std::vector<Point> pts;
    pts.reserve(s.size());
    for (Index k : s) pts.push_back(mesh.node(k));
    out.push_back(std::move(pts));
  }
  return out;
}

Index MeasurementSet::dirac_node(Index i) const {
  require(kind_ == MeasurementKind::Dirac, "dirac_node: not a Dirac measurement set");
  return dirac_nodes_.at(static_cast<std::size_t>(i));
}

Vector MeasurementSet::observe(const Vector& u) const {
  require(u.size() == dual_.rows(), "observe: vector length " + std::to_string(u.size()) +
                                        " does not match mesh size " + std::to_string(dual_.rows()));
  if (kind_ == MeasurementKind::Dirac) {
    Vector out(size());
    for (Index i = 0; i < size(); ++i) out(i) = u(dirac_nodes_[static_cast<std::size_t>(i)]);
    return out;
  }
  return constraints_ * u;
}

Matrix MeasurementSet::observe_all(const Matrix& u) const {
  require(u.rows() == dual_.rows(), "observe: matrix row count does not match mesh size");
  if (kind_ == MeasurementKind::Dirac) {
    Matrix out(size(), u.cols());
    for (Index i = 0; i < size(); ++i) out.row(i) = u.row(dirac_nodes_[static_cast<std::size_t>(i)]);
    return out;
  }
  return constraints_ * u;
}

MeasurementSet make_dirac(const Mesh& mesh, const std::vector<Point>& points) {
  require(!points.empty(), "dirac: need at least one point");
  Matrix dual = Matrix::Zero(mesh.num_nodes(), static_cast<Index>(points.size()));
  std::vector<Point> snapped;
  std::set<Index> used;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const Point& p = points[i];
    require(p[0] > 0.0 && p[0] < 1.0 && (mesh.dim() == 1 || (p[1] > 0.0 && p[1] < 1.0)),
            "dirac: point " + std::to_string(i) + " lies outside the open domain");
    const Index k = mesh.nearest_node(p);
    require(used.insert(k).second, "dirac: point " + std::to_string(i) + " snaps to an already used node");
    dual(k, static_cast<Index>(i)) = 1.0 / mesh.weight();
    snapped.push_back(mesh.node(k));
  }
  return MeasurementSet(mesh, MeasurementKind::Dirac, std::move(dual), std::move(snapped));
}

MeasurementSet make_voronoi(const Mesh& mesh, const std::vector<Point>& centers) {
  require(!centers.empty(), "voronoi: need at least one center");
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Point& c = centers[i];
    require(c[0] > 0.0 && c[0] < 1.0 && (mesh.dim() == 1 || (c[1] > 0.0 && c[1] < 1.0)),
            "voronoi: center " + std::to_string(i) + " lies outside the open domain");
  }
  const Index N = static_cast<Index>(centers.size());
  std::vector<Index> owner(static_cast<std::size_t>(mesh.num_nodes()));
  std::vector<Index> count(static_cast<std::size_t>(N), 0);
  for (Index k = 0; k < mesh.num_nodes(); ++k) {
    Index best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (Index i = 0; i < N; ++i) {
      const double d = mesh.distance(mesh.node(k), centers[static_cast<std::size_t>(i)]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    owner[static_cast<std::size_t>(k)] = best;
    ++count[static_cast<std::size_t>(best)];
  }
  for (Index i = 0; i < N; ++i)
    require(count[static_cast<std::size_t>(i)] > 0,
            "voronoi: cell " + std::to_string(i) + " contains no grid node; refine the mesh");
  Matrix dual = Matrix::Zero(mesh.num_nodes(), N);
  for (Index k = 0; k < mesh.num_nodes(); ++k) {
    const Index i = owner[static_cast<std::size_t>(k)];
    dual(k, i) = 1.0 / (static_cast<double>(count[static_cast<std::size_t>(i)]) * mesh.weight());
  }
  return MeasurementSet(mesh, MeasurementKind::VoronoiIndicator, std::move(dual), centers);
}

MeasurementSet make_density(const Mesh& mesh, const Matrix& densities) {
  require(densities.rows() == mesh.num_nodes(), "density: row count does not match mesh size");
  require(densities.cols() >= 1, "density: need at least one density");
  for (Index i = 0; i < densities.cols(); ++i) {
    require((densities.col(i).array() >= 0.0).all(), "density: column " + std::to_string(i) + " has negative entries");
    const double mass = mesh.weight() * densities.col(i).sum();
    require(std::abs(mass - 1.0) <= 1e-10,
            "density: column " + std::to_string(i) + " has mass " + std::to_string(mass) + ", expected 1");
  }
  return MeasurementSet(mesh, MeasurementKind::Density, densities);
}

Matrix hat_densities(const Mesh& mesh, const std::vector<Point>& centers, double radius) {
  require(radius > 0.0, "hat_densities: radius must be positive");
  Matrix out = Matrix::Zero(mesh.num_nodes(), static_cast<Index>(centers.size()));
  for (std::size_t i = 0; i < centers.size(); ++i) {
    const Point& c = centers[i];
    for (Index k = 0; k < mesh.num_nodes(); ++k) {
      const Point& x = mesh.node(k);
      double v = std::max(0.0, 1.0 - std::abs(x[0] - c[0]) / radius);
      if (mesh.dim() == 2) v *= std::max(0.0, 1.0 - std::abs(x[1] - c[1]) / radius);
      out(k, static_cast<Index>(i)) = v;
    }
    const double mass = mesh.weight() * out.col(static_cast<Index>(i)).sum();
    require(mass > 0.0, "hat_densities: density " + std::to_string(i) + " misses every grid node");
    out.col(static_cast<Index>(i)) /= mass;
  }
  return out;
}

std::vector<Point> lattice_points(int dim, int per_side) {
  require(dim == 1 || dim == 2, "lattice_points: dim must be 1 or 2");
  require(per_side >= 1, "lattice_points: per_side must be >= 1");
  const double step = 1.0 / (per_side + 1);
  std::vector<Point> pts;
  for (int i = 1; i <= per_side; ++i) {
    if (dim == 1) {
      pts.push_back({i * step, 0.0});
    } else {
      for (int j = 1; j <= per_side; ++j) pts.push_back({i * step, j * step});
    }
  }
  return pts;
}

Vector observe(const MeasurementSet& ms, const Vector& u) { return ms.observe(u); }

void write_measurements_csv(std::ostream& os, const Mesh& mesh, const MeasurementSet& ms) {
  if (ms.kind() == MeasurementKind::Density) {
    os << "index,kind,density\n";
    for (Index i = 0; i < ms.size(); ++i) {
      os << i << ',' << to_string(ms.kind()) << ',';
      bool first = true;
      for (Index k : ms.supports()[static_cast<std::size_t>(i)]) {
        if (!first) os << ' ';
        first = false;
        os << k << ':' << format_double(ms.dual_vectors()(k, i));
      }
      os << '\n';
    }
    return;
  }
  os << (mesh.dim() == 1 ? "index,kind,x\n" : "index,kind,x,y\n");
  for (Index i = 0; i < ms.size(); ++i) {
    const Point& p = ms.anchors().at(static_cast<std::size_t>(i));
    os << i << ',' << to_string(ms.kind()) << ',' << format_double(p[0]);
    if (mesh.dim() == 2) os << ',' << format_double(p[1]);
    os << '\n';
  }
}

}  // namespace bayeshom
