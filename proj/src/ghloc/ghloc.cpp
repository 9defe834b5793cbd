#include "ghloc/ghloc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "recon/marching_cubes.hpp"

namespace ghc {

HeadFit fit_sphere(const std::vector<Eigen::Vector3d>& points) {
  const int n = static_cast<int>(points.size());
  if (n < kMinHeadPoints) {
    fail(ErrorCode::insufficient_surface,
         "sphere fit needs >= " + std::to_string(kMinHeadPoints) + " points, got " + std::to_string(n));
  }
  // work relative to the centroid for conditioning
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : points) mean += p;
  mean /= n;

  // |p|^2 = 2 c.p + (r^2 - |c|^2)
  Eigen::MatrixXd A(n, 4);
  Eigen::VectorXd b(n);
  for (int i = 0; i < n; ++i) {
    const Eigen::Vector3d q = points[i] - mean;
    A.row(i) << 2 * q.x(), 2 * q.y(), 2 * q.z(), 1.0;
    b[i] = q.squaredNorm();
  }
  const Eigen::Vector4d s = A.colPivHouseholderQr().solve(b);
  Eigen::Vector3d c = s.head<3>();
  const double r2 = s[3] + c.squaredNorm();
  if (!(r2 > 0) || !std::isfinite(r2)) fail(ErrorCode::insufficient_surface, "points do not determine a sphere");
  double r = std::sqrt(r2);

  // geometric refinement: minimise sum (|p - c| - r)^2
  for (int iter = 0; iter < 50; ++iter) {
    Eigen::MatrixXd J(n, 4);
    Eigen::VectorXd res(n);
    for (int i = 0; i < n; ++i) {
      const Eigen::Vector3d d = points[i] - mean - c;
      const double len = d.norm();
      res[i] = len - r;
      const Eigen::Vector3d u = len > 0 ? Eigen::Vector3d(d / len) : Eigen::Vector3d::Zero();
      J.row(i) << -u.x(), -u.y(), -u.z(), -1.0;
    }
    const Eigen::Vector4d step = J.colPivHouseholderQr().solve(-res);
    c += step.head<3>();
    r += step[3];
    if (step.norm() < 1e-13 * std::max(1.0, r)) break;
  }

  HeadFit fit;
  fit.center = c + mean;
  fit.radius = std::abs(r);
  double ss = 0;
  std::vector<double> res(n);
  for (int i = 0; i < n; ++i) {
    res[i] = (points[i] - fit.center).norm() - fit.radius;
    ss += res[i] * res[i];
  }
  fit.rms_residual = std::sqrt(ss / n);
  const double band = std::max(1.0, 3.0 * fit.rms_residual);
  fit.inlier_count = static_cast<int>(std::count_if(res.begin(), res.end(), [&](double e) { return std::abs(e) <= band; }));
  return fit;
}

std::vector<Eigen::Vector3d> proximal_third(const std::vector<Eigen::Vector3d>& points) {
  const int n = static_cast<int>(points.size());
  if (n < kMinHeadPoints) fail(ErrorCode::insufficient_surface, "too few humerus surface points");
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  for (const auto& p : points) mean += p;
  mean /= n;
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const auto& p : points) cov += (p - mean) * (p - mean).transpose();
  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  const Eigen::Vector3d axis = eig.eigenvectors().col(2);

  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) {
    t[i] = (points[i] - mean).dot(axis);
    lo = std::min(lo, t[i]);
    hi = std::max(hi, t[i]);
  }
  const double third = (hi - lo) / 3.0;
  // the head end is the wider one
  double spread[2] = {0, 0};
  int count[2] = {0, 0};
  for (int i = 0; i < n; ++i) {
    const int end = t[i] <= lo + third ? 0 : (t[i] >= hi - third ? 1 : -1);
    if (end < 0) continue;
    spread[end] += ((points[i] - mean) - t[i] * axis).norm();
    count[end]++;
  }
  const double s0 = count[0] ? spread[0] / count[0] : 0, s1 = count[1] ? spread[1] / count[1] : 0;
  const bool upper = s1 > s0;
  std::vector<Eigen::Vector3d> out;
  for (int i = 0; i < n; ++i) {
    if (upper ? t[i] >= hi - third : t[i] <= lo + third) out.push_back(points[i]);
  }
  return out;
}

HeadFit fit_humeral_head(const TriMesh& humerus) {
  if (humerus.vertices.size() < static_cast<std::size_t>(kMinHeadPoints)) {
    fail(ErrorCode::insufficient_surface, "humerus surface has too few vertices");
  }
  return fit_sphere(proximal_third(humerus.vertices));
}

HeadFit fit_humeral_head(const LabelMap& labels) {
  TriMesh mesh;
  try {
    mesh = marching_cubes(labels, label::humerus);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::empty_surface) throw;
    fail(ErrorCode::insufficient_surface, "label map has no humerus");
  }
  return fit_humeral_head(mesh);
}

GhBox gh_bounding_box(const HeadFit& fit, const LabelMap& labels, int patch) {
  if (patch < 1) fail(ErrorCode::invalid_argument, "patch size must be positive");
  if (!(fit.radius > 0) || !fit.center.allFinite()) fail(ErrorCode::invalid_argument, "invalid head fit");
  const GridGeometry& g = labels.geometry();
  const Shape3 s = g.shape;
  // nearest scapula boundary voxel (6-neighbourhood) to the head centre
  double best = std::numeric_limits<double>::infinity();
  Eigen::Vector3d nearest = Eigen::Vector3d::Zero();
  bool any = false;
  for (int k = 0; k < s.nz; ++k) {
    for (int j = 0; j < s.ny; ++j) {
      for (int i = 0; i < s.nx; ++i) {
        if (labels(i, j, k) != label::scapula) continue;
        any = true;
        bool boundary = false;
        const int nb[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
        for (const auto& d : nb) {
          const int a = i + d[0], b = j + d[1], c = k + d[2];
          if (!labels.contains(a, b, c) || labels(a, b, c) != label::scapula) {
            boundary = true;
            break;
          }
        }
        if (!boundary) continue;
        const Eigen::Vector3d p = g.world(i, j, k);
        const double d2 = (p - fit.center).squaredNorm();
        if (d2 < best) {
          best = d2;
          nearest = p;
        }
      }
    }
  }
  if (!any) fail(ErrorCode::missing_scapula, "label map has no scapula");

  GhBox box;
  box.patch = patch;
  box.joint_center = 0.5 * (fit.center + nearest);
  for (int a = 0; a < 3; ++a) {
    const double c = (box.joint_center[a] - g.origin[a]) / g.spacing[a];
    // first voxel of a patch-wide window centred on c; std::round is
    // symmetric so the box mirrors exactly under a sagittal flip
    int lo = static_cast<int>(std::round(c - 0.5 * (patch - 1)));
    const int n = s[a];
    if (n >= patch) {
      lo = std::clamp(lo, 0, n - patch);
    } else {
      lo = std::clamp(lo, n - patch, 0);
    }
    box.lo[a] = lo;
  }
  return box;
}

}  // namespace ghc
