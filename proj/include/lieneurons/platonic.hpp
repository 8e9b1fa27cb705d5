#pragma once

// Platonic solid meshes and the inter-face homographies used as sl(3)
// classification inputs.

#include "lieneurons/datasets.hpp"

#include <Eigen/Dense>

#include <array>
#include <string>
#include <vector>

namespace lieneurons {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct PlatonicSolid {
  std::string name;
  std::vector<Vec3> vertices;            // unit circumradius
  std::vector<std::array<int, 3>> faces; // counter-clockwise seen from outside
  std::vector<std::array<int, 2>> edges; // pairs of faces sharing two vertices

  int euler_characteristic() const {
    return static_cast<int>(vertices.size()) - static_cast<int>(edges.size()) + static_cast<int>(faces.size());
  }
};

/// label 0 = tetrahedron, 1 = octahedron, 2 = icosahedron.
PlatonicSolid make_solid(int label);

/// Both orientations of every edge: 2 * |edges| ordered face pairs.
std::vector<std::array<int, 2>> ordered_face_pairs(const PlatonicSolid& solid);

/// Object rotation in the world and camera center. The camera looks down -z
/// with camera-from-world rotation diag(1, -1, -1). The center sits inside the
/// solid: the fold homography has det(H_raw) = d_b / d_a (signed plane
/// distances), so from outside every pair straddling the silhouette would have
/// no SL(3) representative with a principal log. Off-centre, because the
/// eigenvalue ratio d_b / d_a is what tells the solids apart.
struct CameraPose {
  Mat3 object_rotation = Mat3::Identity();
  Vec3 camera_center{0.128, -0.096, 0.192};
};

/// A fixed pose keeping every vertex well away from the camera's z = 0 plane.
CameraPose default_pose(const PlatonicSolid& solid);
/// Jitters `start` (fixed seed, up to 100 retries) until every face pair gives
/// a usable homography; GenerationError otherwise.
CameraPose resolve_pose(const PlatonicSolid& solid, const CameraPose& start);
CameraPose resolve_pose(const PlatonicSolid& solid);

/// Camera-frame coordinates of a vertex before any camera rotation.
Vec3 camera_point(const PlatonicSolid& solid, const CameraPose& pose, int vertex);

/// The unit-determinant homography induced by the hinge rotation about the
/// shared edge that lays face_a into the plane of face_b, in a camera rotated
/// by R: R H R^T. Throws GenerationError
/// when the faces are not adjacent or det(H_raw) <= 0.
Mat3 face_pair_homography_matrix(const PlatonicSolid& solid, const CameraPose& pose, int face_a, int face_b,
                                 const Mat3& camera_rotation = Mat3::Identity());
/// vee(log H). Throws GenerationError when the principal log does not exist.
Vector face_pair_homography(const PlatonicSolid& solid, const CameraPose& pose, int face_a, int face_b,
                            const Mat3& camera_rotation = Mat3::Identity());

/// Max image-plane distance between H applied to face_a's projected vertices
/// and the projections of their images: the two shared vertices stay put and
/// the third lands on face_b's third vertex mirrored through the shared edge.
double face_pair_reprojection_error(const PlatonicSolid& solid, const CameraPose& pose, int face_a, int face_b,
                                    const Mat3& camera_rotation = Mat3::Identity());

/// Uniformly distributed rotations (normalized Gaussian quaternions).
std::vector<Mat3> random_rotations(std::size_t n, std::uint64_t seed);

struct PlatonicConfig {
  std::size_t n_per_class = 1000;
  double noise_scale = 0.01;
  std::uint64_t seed = 0;
  // Sample i is seen by a camera rotated by rotations[i % size]; empty means
  // the fixed training camera. The noise stream does not depend on this.
  std::vector<Mat3> rotations;
};

/// Each record holds the 2E face-pair logs of one solid (N = 12, 24, 60) as a
/// single channel, perturbed by Normal(0, noise_scale^2) algebra noise before
/// the camera rotation is applied. Records of rotated sets carry R as the
/// conjugator.
Dataset gen_platonic_set(const PlatonicConfig& config);

}  // namespace lieneurons
