#include <doctest.h>

#include <cmath>
#include <numbers>

#include "attnwarp/error.hpp"
#include "attnwarp/geometry.hpp"
#include "support.hpp"

using namespace attnwarp;
using namespace testsupport;
using Eigen::Matrix3d;
using Eigen::Vector2d;
using Eigen::Vector3d;

namespace {

CameraIntrinsics simple_intrinsics() {
  CameraIntrinsics k;
  k.fx = 100;
  k.fy = 100;
  k.cx = 50;
  k.cy = 40;
  k.width = 100;
  k.height = 80;
  return k;
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an attnwarp::Error");
  return ErrorKind::Config;
}

}  // namespace

TEST_CASE("unproject and project on the optical axis") {
  const auto k = simple_intrinsics();
  CHECK(unproject({k.cx, k.cy}, 3.0, k) == Vector3d(0, 0, 3));
  CHECK(unproject({k.cx + k.fx, k.cy}, 1.0, k) == Vector3d(1, 0, 1));
  const Projection p = project({0, 0, 5}, k);
  CHECK(p.pixel == Vector2d(k.cx, k.cy));
  CHECK(p.depth == 5.0);
  CHECK(project({1, 0, 1}, k).pixel.x() == 150.0);
  CHECK_FALSE(project({0, 0, -2}, k).in_front());
}

TEST_CASE("unproject and project reject degenerate input") {
  const auto k = simple_intrinsics();
  CHECK(kind_of([&] { unproject({1, 1}, 0.0, k); }) == ErrorKind::InvalidSample);
  CHECK(kind_of([&] { unproject({1, 1}, -1.0, k); }) == ErrorKind::InvalidSample);
  CHECK(kind_of([&] { project({1, 1, 0}, k); }) == ErrorKind::ProjectionSingularity);
}

TEST_CASE("project inverts unproject over random samples") {
  Rng rng(11);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto k = random_intrinsics(rng, uniform_int(rng, 16, 1024), uniform_int(rng, 16, 1024));
    const Vector2d pix(uniform(rng, 0, k.width), uniform(rng, 0, k.height));
    const double d = uniform(rng, 0.01, 100.0);
    const Projection p = project(unproject(pix, d, k), k);
    worst = std::max(worst, (p.pixel - pix).cwiseAbs().maxCoeff());
    CHECK(std::abs(p.depth - d) <= 1e-12 * d);
  }
  CHECK(worst <= 1e-9);
}

TEST_CASE("camera_to_world conventions") {
  const Vector3d p(0.3, -1.2, 4.0);
  CHECK(camera_to_world(p, CameraExtrinsics{}) == p);

  const Vector3d t(1.0, -2.0, 0.5);
  const auto shifted = CameraExtrinsics::from_rt(Matrix3d::Identity(), t);
  CHECK((camera_to_world(p, shifted) - (p - t)).norm() < 1e-12);
  CHECK((world_to_camera(camera_to_world(p, shifted), shifted) - p).norm() < 1e-12);

  // World->camera rotation of +90 degrees about z.
  Matrix3d rz;
  rz << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const auto rot = CameraExtrinsics::from_rt(rz, Vector3d::Zero());
  CHECK((camera_to_world({1, 0, 0}, rot) - Vector3d(0, -1, 0)).norm() < 1e-12);
  CHECK(rot.world_to_camera.inverse().topLeftCorner<3, 3>().isApprox(rz.transpose()));

  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const Camera c = random_camera(rng, 10, 10, 3.0, 5.0);
    const Vector3d q(uniform(rng, -9, 9), uniform(rng, -9, 9), uniform(rng, -9, 9));
    CHECK((world_to_camera(camera_to_world(q, c.extrinsics), c.extrinsics) - q).norm() <= 1e-9);
    const Eigen::Vector4d h = c.extrinsics.world_to_camera.inverse() * q.homogeneous();
    CHECK((camera_to_world(q, c.extrinsics) - h.head<3>()).norm() <= 1e-9);
  }
}

TEST_CASE("camera validation") {
  auto k = simple_intrinsics();
  k.cx = 100.0;
  CHECK(kind_of([&] { k.validate(); }) == ErrorKind::Config);
  k = simple_intrinsics();
  k.fy = 0.0;
  CHECK(kind_of([&] { k.validate(); }) == ErrorKind::Config);

  CameraExtrinsics e;
  e.world_to_camera(0, 0) = 2.0;
  CHECK(kind_of([&] { e.validate(); }) == ErrorKind::Config);
  e = CameraExtrinsics::from_rt(-Matrix3d::Identity(), Vector3d::Zero());
  CHECK(kind_of([&] { e.validate(); }) == ErrorKind::Config);
  e = CameraExtrinsics{};
  e.world_to_camera(3, 0) = 0.1;
  CHECK(kind_of([&] { e.validate(); }) == ErrorKind::Config);
}

TEST_CASE("look_at points the optical axis at the target") {
  const Vector3d c(1, 0.5, -2), target(0, 0, 3);
  const auto e = CameraExtrinsics::look_at(c, target);
  e.validate();
  const Vector3d in_cam = world_to_camera(target, e);
  CHECK(std::abs(in_cam.x()) < 1e-12);
  CHECK(std::abs(in_cam.y()) < 1e-12);
  CHECK(in_cam.z() == doctest::Approx((target - c).norm()));
  CHECK((e.center() - c).norm() < 1e-12);
}

TEST_CASE("identity pose gives the identity warp field") {
  Rng rng(5);
  const Camera cam = random_camera(rng, 64, 48);
  const DepthMap depth = random_depth(rng, 64, 48);
  const WarpField f = compute_warp_field(depth, cam, cam);
  for (int y = 0; y < 48; ++y)
    for (int x = 0; x < 64; ++x) {
      const std::size_t i = f.index(x, y);
      if (depth.at(x, y) > 0) {
        CHECK(std::abs(f.u[i] - (x + 0.5)) <= 1e-6);
        CHECK(std::abs(f.v[i] - (y + 0.5)) <= 1e-6);
        CHECK(f.valid.data[i] == 1.0f);
      } else {
        CHECK(std::isnan(f.u[i]));
        CHECK(f.valid.data[i] == 0.0f);
      }
    }
}

TEST_CASE("fronto-parallel plane gives the closed-form disparity") {
  const auto k = simple_intrinsics();
  const double z = 2.5, tx = 0.05;
  const DepthMap depth(k.width, k.height, static_cast<float>(z));
  const Camera tgt{k, {}};
  const Camera src{k, CameraExtrinsics::from_rt(Matrix3d::Identity(), {tx, 0, 0})};
  const WarpField f = compute_warp_field(depth, tgt, src);
  const double shift = k.fx * tx / z;
  for (int y = 0; y < k.height; ++y)
    for (int x = 0; x < k.width; ++x) {
      const std::size_t i = f.index(x, y);
      CHECK(std::abs(f.u[i] - (x + 0.5 + shift)) <= 1e-6);
      CHECK(std::abs(f.v[i] - (y + 0.5)) <= 1e-6);
      // Pixels shifted past the right edge leave the source image.
      CHECK(f.valid.data[i] == (x + 0.5 + shift < k.width ? 1.0f : 0.0f));
    }
}

TEST_CASE("points behind the source camera are invalid") {
  const auto k = simple_intrinsics();
  const DepthMap depth(k.width, k.height, 1.0f);
  const Camera tgt{k, {}};
  // Source sits 3 units in front of the target, looking the same way.
  const Camera src{k, CameraExtrinsics::from_rt(Matrix3d::Identity(), {0, 0, -3})};
  const WarpField f = compute_warp_field(depth, tgt, src);
  CHECK(f.valid.coverage() == 0.0);
}

TEST_CASE("warp field matches a scalar reference on random scenes") {
  Rng rng(2024);
  for (int scene = 0; scene < 100; ++scene) {
    const int w = uniform_int(rng, 8, 48), h = uniform_int(rng, 8, 48);
    const Camera tgt = random_camera(rng, w, h);
    Camera src = random_camera(rng, uniform_int(rng, 8, 48), uniform_int(rng, 8, 48));
    const DepthMap depth = random_depth(rng, w, h);
    const WarpField f = compute_warp_field(depth, tgt, src);
    REQUIRE(f.src_width == src.intrinsics.width);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const std::size_t i = f.index(x, y);
        const double d = depth.at(x, y);
        double u = 0, v = 0;
        const bool front = d > 0 && reference_reproject(x, y, d, tgt, src, u, v);
        if (!front) {
          CHECK(f.valid.data[i] == 0.0f);
          continue;
        }
        CHECK(std::abs(f.u[i] - u) <= 1e-6);
        CHECK(std::abs(f.v[i] - v) <= 1e-6);
        // Away from the image border the two bound checks must agree.
        const double margin = std::min({u, src.intrinsics.width - u, v, src.intrinsics.height - v});
        if (std::abs(margin) > 1e-9) {
          const bool inside = u >= 0 && u < src.intrinsics.width && v >= 0 && v < src.intrinsics.height;
          CHECK(f.valid.data[i] == (inside ? 1.0f : 0.0f));
        }
      }
  }
}

TEST_CASE("warp field rejects mismatched depth") {
  const auto k = simple_intrinsics();
  const DepthMap depth(k.width + 1, k.height, 1.0f);
  CHECK(kind_of([&] { compute_warp_field(depth, Camera{k, {}}, Camera{k, {}}); }) == ErrorKind::Config);
}

TEST_CASE("camera JSON round-trips and rejects unknown fields") {
  Rng rng(8);
  const Camera c = random_camera(rng, 320, 240);
  const Camera back = camera_from_json_text(camera_to_json_text(c));
  CHECK(back.intrinsics.fx == c.intrinsics.fx);
  CHECK(back.intrinsics.cy == c.intrinsics.cy);
  CHECK(back.intrinsics.width == 320);
  CHECK(back.extrinsics.world_to_camera == c.extrinsics.world_to_camera);

  const std::string good =
      R"({"fx":10,"fy":10,"cx":5,"cy":5,"width":10,"height":10,)"
      R"("world_to_camera":[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]})";
  CHECK_NOTHROW(camera_from_json_text(good));
  std::string extra = good;
  extra.insert(1, R"("skew":0,)");
  CHECK(kind_of([&] { camera_from_json_text(extra); }) == ErrorKind::Config);
  CHECK(kind_of([&] { camera_from_json_text(R"({"fx":10})"); }) == ErrorKind::Config);
  CHECK(kind_of([&] { camera_from_json_text("{not json"); }) == ErrorKind::Config);
}
