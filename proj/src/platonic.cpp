#include "lieneurons/platonic.hpp"

#include "lieneurons/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lieneurons {
namespace {

// World to camera before any camera rotation: the camera looks down -z.
const Mat3 kCameraFromWorld = Eigen::Vector3d(1.0, -1.0, -1.0).asDiagonal();
// Vertices closer than this to the camera's z = 0 plane make projections
// ill-conditioned.
constexpr double kMinDepth = 0.1;

// Faces are the vertex triples at mutual minimal distance.
PlatonicSolid assemble(std::string name, std::vector<Vec3> vertices) {
  for (auto& v : vertices) v.normalize();
  const int V = static_cast<int>(vertices.size());
  double edge = std::numeric_limits<double>::infinity();
  for (int i = 0; i < V; ++i)
    for (int j = i + 1; j < V; ++j) edge = std::min(edge, (vertices[i] - vertices[j]).norm());
  PlatonicSolid s;
  s.name = std::move(name);
  s.vertices = std::move(vertices);
  auto adjacent = [&](int i, int j) { return std::abs((s.vertices[i] - s.vertices[j]).norm() - edge) < 1e-9; };
  for (int i = 0; i < V; ++i)
    for (int j = i + 1; j < V; ++j)
      for (int k = j + 1; k < V; ++k) {
        if (!adjacent(i, j) || !adjacent(j, k) || !adjacent(i, k)) continue;
        const Vec3& a = s.vertices[i];
        const Vec3 out = (s.vertices[j] - a).cross(s.vertices[k] - a);
        if (out.dot(a + s.vertices[j] + s.vertices[k]) > 0) s.faces.push_back({i, j, k});
        else s.faces.push_back({i, k, j});
      }
  const int F = static_cast<int>(s.faces.size());
  for (int f = 0; f < F; ++f)
    for (int g = f + 1; g < F; ++g) {
      int shared = 0;
      for (int a : s.faces[f])
        for (int b : s.faces[g]) shared += a == b;
      if (shared == 2) s.edges.push_back({f, g});
    }
  return s;
}

struct Fold {
  int p, q;        // shared edge
  int opp_a, opp_b;
};

Fold fold_of(const PlatonicSolid& s, int face_a, int face_b) {
  if (face_a < 0 || face_b < 0 || face_a >= static_cast<int>(s.faces.size()) ||
      face_b >= static_cast<int>(s.faces.size())) {
    throw ArgumentError("face index out of range");
  }
  const auto& A = s.faces[face_a];
  const auto& B = s.faces[face_b];
  std::vector<int> shared;
  int opp_a = -1, opp_b = -1;
  for (int a : A) {
    if (std::find(B.begin(), B.end(), a) != B.end()) shared.push_back(a);
    else opp_a = a;
  }
  for (int b : B)
    if (std::find(A.begin(), A.end(), b) == A.end()) opp_b = b;
  if (shared.size() != 2 || opp_a < 0 || opp_b < 0) {
    throw GenerationError("faces " + std::to_string(face_a) + " and " + std::to_string(face_b) + " of the " + s.name +
                          " are not adjacent");
  }
  return {shared[0], shared[1], opp_a, opp_b};
}

Vec3 project(const Vec3& X) { return {X.x() / X.z(), X.y() / X.z(), 1.0}; }

Mat3 unrotated_homography(const PlatonicSolid& s, const CameraPose& pose, int face_a, int face_b) {
  const Fold f = fold_of(s, face_a, face_b);
  const Vec3 p = camera_point(s, pose, f.p);
  const Vec3 q = camera_point(s, pose, f.q);
  const Vec3 oa = camera_point(s, pose, f.opp_a);
  const Vec3 ob = camera_point(s, pose, f.opp_b);

  // Hinge rotation laying face a into the plane of b on the far side of the
  // shared edge (unfolding). Folding a face-to-face onto b instead flips the
  // plane orientation, giving det(H_raw) < 0 whenever both faces are seen
  // from the same side.
  const Vec3 axis = (q - p).normalized();
  const Vec3 mid = 0.5 * (p + q);
  const Vec3 u = oa - mid;
  const Vec3 w = mid - ob;
  const double angle = std::atan2(axis.dot(u.cross(w)), u.dot(w));
  const Mat3 Rf = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
  const Vec3 tf = mid - Rf * mid;

  // Plane of face a: n^T X = d.
  const Vec3 n = (q - p).cross(oa - p).normalized();
  const double d = n.dot(p);
  if (std::abs(d) < 1e-6) throw GenerationError("face plane passes through the camera center");
  const Mat3 H = Rf + tf * n.transpose() / d;
  const double det = H.determinant();
  if (!(det > 0.0)) throw GenerationError("fold homography has non-positive determinant");
  return H / std::cbrt(det);
}

bool pose_usable(const PlatonicSolid& s, const CameraPose& pose) {
  for (int v = 0; v < static_cast<int>(s.vertices.size()); ++v)
    if (std::abs(camera_point(s, pose, v).z()) < kMinDepth) return false;
  try {
    for (const auto& [a, b] : ordered_face_pairs(s)) {
      if (face_pair_reprojection_error(s, pose, a, b) > 1e-9) return false;
      (void)face_pair_homography(s, pose, a, b);
    }
  } catch (const GenerationError&) {
    return false;
  }
  return true;
}

}  // namespace

PlatonicSolid make_solid(int label) {
  const double phi = std::numbers::phi;
  switch (label) {
    case 0:
      return assemble("tetrahedron", {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}});
    case 1:
      return assemble("octahedron", {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}});
    case 2: {
      std::vector<Vec3> v;
      for (double a : {-1.0, 1.0})
        for (double b : {-phi, phi}) {
          v.emplace_back(0, a, b);
          v.emplace_back(a, b, 0);
          v.emplace_back(b, 0, a);
        }
      return assemble("icosahedron", std::move(v));
    }
    default: throw ArgumentError("solid label must be 0, 1 or 2");
  }
}

std::vector<std::array<int, 2>> ordered_face_pairs(const PlatonicSolid& solid) {
  std::vector<std::array<int, 2>> out;
  out.reserve(2 * solid.edges.size());
  for (const auto& [a, b] : solid.edges) {
    out.push_back({a, b});
    out.push_back({b, a});
  }
  return out;
}

CameraPose default_pose(const PlatonicSolid& solid) {
  // Align the vertex or face-center direction that keeps every vertex farthest
  // from the camera's z = 0 plane with the optical axis, then tilt slightly so
  // no symmetry axis is exact.
  std::vector<Vec3> candidates = solid.vertices;
  for (const auto& f : solid.faces)
    candidates.push_back((solid.vertices[f[0]] + solid.vertices[f[1]] + solid.vertices[f[2]]).normalized());
  Vec3 best_axis = Vec3::UnitZ();
  double best = -1.0;
  for (const auto& axis : candidates) {
    double spread = std::numeric_limits<double>::infinity();
    for (const auto& v : solid.vertices) spread = std::min(spread, std::abs(v.dot(axis)));
    if (spread > best + 1e-12) {
      best = spread;
      best_axis = axis;
    }
  }
  const Mat3 align = Eigen::Quaterniond::FromTwoVectors(best_axis, Vec3::UnitZ()).toRotationMatrix();
  CameraPose pose;
  pose.object_rotation = Eigen::AngleAxisd(0.12, Vec3(0.3, -0.5, 0.8).normalized()).toRotationMatrix() * align;
  return pose;
}

CameraPose resolve_pose(const PlatonicSolid& solid) { return resolve_pose(solid, default_pose(solid)); }

CameraPose resolve_pose(const PlatonicSolid& solid, const CameraPose& start) {
  CameraPose pose = start;
  Rng rng(0x1e7a5eedULL);
  std::normal_distribution<double> normal(0.0, 0.05);
  for (int attempt = 0; attempt <= 100; ++attempt) {
    if (pose_usable(solid, pose)) return pose;
    const Vec3 jitter(normal(rng), normal(rng), normal(rng));
    pose.object_rotation = Eigen::AngleAxisd(jitter.norm(), jitter.normalized()).toRotationMatrix() * start.object_rotation;
  }
  throw GenerationError("no usable pose for the " + solid.name + " after 100 jitter retries");
}

Vec3 camera_point(const PlatonicSolid& solid, const CameraPose& pose, int vertex) {
  const Vec3 world = pose.object_rotation * solid.vertices.at(static_cast<std::size_t>(vertex));
  return kCameraFromWorld * (world - pose.camera_center);
}

Mat3 face_pair_homography_matrix(const PlatonicSolid& solid, const CameraPose& pose, int face_a, int face_b,
                                 const Mat3& camera_rotation) {
  const Mat3 H = unrotated_homography(solid, pose, face_a, face_b);
  return camera_rotation * H * camera_rotation.transpose();
}

Vector face_pair_homography(const PlatonicSolid& solid, const CameraPose& pose, int face_a, int face_b,
                            const Mat3& camera_rotation) {
  const Matrix H = face_pair_homography_matrix(solid, pose, face_a, face_b, camera_rotation);
  try {
    return sl3().vee(matrix_log(H));
  } catch (const LogUndefinedError& e) {
    throw GenerationError(std::string("face pair homography: ") + e.what());
  }
}

double face_pair_reprojection_error(const PlatonicSolid& solid, const CameraPose& pose, int face_a, int face_b,
                                    const Mat3& camera_rotation) {
  const Fold f = fold_of(solid, face_a, face_b);
  const Mat3 H = face_pair_homography_matrix(solid, pose, face_a, face_b, camera_rotation);
  const Vec3 p = camera_point(solid, pose, f.p);
  const Vec3 q = camera_point(solid, pose, f.q);
  // Unfolded a is b mirrored through the midpoint of the shared edge.
  const Vec3 apex = p + q - camera_point(solid, pose, f.opp_b);
  const std::array<std::pair<Vec3, Vec3>, 3> matches{{{p, p}, {q, q}, {camera_point(solid, pose, f.opp_a), apex}}};
  double worst = 0.0;
  for (const auto& [src, dst] : matches) {
    const Vec3 x = project(camera_rotation * src);
    const Vec3 y = project(camera_rotation * dst);
    worst = std::max(worst, (project(H * x) - y).norm());
  }
  return worst;
}

std::vector<Mat3> random_rotations(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Mat3> out;
  out.reserve(n);
  while (out.size() < n) {
    Eigen::Quaterniond q(normal(rng), normal(rng), normal(rng), normal(rng));
    if (q.norm() < 1e-12) continue;
    out.push_back(q.normalized().toRotationMatrix());
  }
  return out;
}

Dataset gen_platonic_set(const PlatonicConfig& config) {
  if (config.n_per_class < 1) throw ArgumentError("gen_platonic_set: n_per_class must be >= 1");
  if (!(config.noise_scale >= 0.0)) throw ArgumentError("gen_platonic_set: noise_scale must be >= 0");
  const auto& g = sl3();
  const auto K = static_cast<std::size_t>(g.dim());

  std::array<std::vector<Vector>, 3> clean;
  nlohmann::json per_class = nlohmann::json::array();
  for (int label = 0; label < 3; ++label) {
    const auto solid = make_solid(label);
    const auto pose = resolve_pose(solid);
    for (const auto& [a, b] : ordered_face_pairs(solid)) clean[label].push_back(face_pair_homography(solid, pose, a, b));
    per_class.push_back({{"label", label}, {"name", solid.name}, {"set_size", clean[label].size()}});
  }

  std::vector<Matrix> adjoints;
  for (const auto& R : config.rotations) adjoints.push_back(GroupElement(Matrix(R)).adjoint(g));

  Dataset data;
  data.task = Task::Platonic;
  data.algebra = g.name();
  data.dim = K;
  data.channels = 1;
  data.seed = config.seed;
  data.metadata = {{"generator", "platonic"},
                   {"n_per_class", config.n_per_class},
                   {"noise_scale", config.noise_scale},
                   {"n_rotations", config.rotations.size()},
                   {"classes", per_class}};

  Rng rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  data.records.reserve(3 * config.n_per_class);
  for (std::size_t i = 0; i < config.n_per_class; ++i) {
    for (int label = 0; label < 3; ++label) {
      const std::size_t sample = data.records.size();
      DatasetRecord r;
      r.set_size = clean[label].size();
      r.channels = 1;
      r.label = label;
      for (std::size_t n = 0; n < r.set_size; ++n) {
        Vector v = clean[label][n];
        for (Eigen::Index k = 0; k < v.size(); ++k) v(k) += config.noise_scale * normal(rng);
        if (!adjoints.empty()) v = adjoints[sample % adjoints.size()] * v;
        r.set_input(n, 0, v);
      }
      if (!config.rotations.empty()) r.conjugator = Matrix(config.rotations[sample % config.rotations.size()]);
      data.records.push_back(std::move(r));
    }
  }
  return data;
}

}  // namespace lieneurons
