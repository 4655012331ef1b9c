// Copyright Contributors to the mm3dgs Project
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "mm3dgs/dataset_io.hpp"
#include "mm3dgs/error.hpp"
#include "mm3dgs/losses.hpp"
#include "mm3dgs/synthetic.hpp"
#include "test_util.hpp"

namespace mm3dgs {
namespace {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream(path) << text;
}

SyntheticSceneSpec small_spec() {
  SyntheticSceneSpec spec;
  spec.frames = 6;
  spec.width = 48;
  spec.height = 36;
  spec.focal = 36.0;
  spec.gaussian_count = 300;
  return spec;
}

// Minimal hand-written sequence: 4x3 images, index files with jittered stamps.
void write_fixture(const fs::path& dir, const std::vector<double>& rgb_t, const std::vector<double>& depth_t) {
  Image rgb(4, 3, 3, 0.5), depth(4, 3, 1, 1.25);
  std::string rgb_index = "# rgb\n", depth_index = "# depth\n";
  fs::create_directories(dir / "rgb");
  fs::create_directories(dir / "depth");
  for (size_t i = 0; i < rgb_t.size(); ++i) {
    const std::string name = "rgb/" + std::to_string(i) + ".png";
    write_png8((dir / name).string(), rgb);
    rgb_index += std::to_string(rgb_t[i]) + " " + name + "\n";
  }
  for (size_t i = 0; i < depth_t.size(); ++i) {
    const std::string name = "depth/" + std::to_string(i) + ".png";
    write_png16((dir / name).string(), depth, 5000.0);
    depth_index += std::to_string(depth_t[i]) + " " + name + "\n";
  }
  write_text(dir / "rgb.txt", rgb_index);
  write_text(dir / "depth.txt", depth_index);
}

template <typename F>
ErrorCode code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no exception";
  return ErrorCode::InvalidArgument;
}

TEST(DatasetIo, SequenceRoundTripsThroughDisk) {
  const SyntheticData data = generate_synthetic(small_spec());
  test::TempDir dir("seq");
  write_tum_sequence(dir.str(), data.sequence);
  const Sequence back = load_tum_sequence(dir.str());
  ASSERT_EQ(back.size(), data.sequence.size());
  EXPECT_EQ(back.intrinsics.fx, data.sequence.intrinsics.fx);
  EXPECT_EQ(back.intrinsics.width, data.sequence.intrinsics.width);
  ASSERT_EQ(back.ground_truth.size(), data.sequence.ground_truth.size());
  for (size_t i = 0; i < back.size(); ++i) {
    EXPECT_NEAR(back.frames[i].t, data.sequence.frames[i].t, 1e-9);
    const Pose& a = back.ground_truth[i].pose;
    const Pose& b = data.sequence.ground_truth[i].pose;
    EXPECT_LT((a.translation - b.translation).norm(), 1e-9);
    EXPECT_LT(rotation_angle(a.rotation, b.rotation), 1e-8);
    const Frame fa = back.load_frame(i), fb = data.sequence.load_frame(i);
    // 8-bit color and 0.2 mm depth quantization
    for (size_t p = 0; p < fa.rgb.data.size(); ++p) EXPECT_NEAR(fa.rgb.data[p], fb.rgb.data[p], 0.5 / 255 + 1e-12);
    for (size_t p = 0; p < fa.depth.data.size(); ++p) EXPECT_NEAR(fa.depth.data[p], fb.depth.data[p], 0.5 / 5000 + 1e-12);
  }
  ASSERT_EQ(back.imu.size(), data.sequence.imu.size());
  for (size_t i = 0; i < back.imu.size(); ++i) {
    EXPECT_NEAR(back.imu[i].t, data.sequence.imu[i].t, 1e-9);
    EXPECT_LT((back.imu[i].accel - data.sequence.imu[i].accel).norm(), 1e-9);
    EXPECT_LT((back.imu[i].gyro - data.sequence.imu[i].gyro).norm(), 1e-9);
  }
  // re-serializing the loaded sequence reproduces the same stamps and poses
  test::TempDir again("seq2");
  write_tum_sequence(again.str(), back);
  const Sequence twice = load_tum_sequence(again.str());
  for (size_t i = 0; i < twice.size(); ++i) {
    EXPECT_EQ(twice.frames[i].t, back.frames[i].t);
    EXPECT_LT((twice.ground_truth[i].pose.translation - back.ground_truth[i].pose.translation).norm(), 1e-9);
  }
}

TEST(DatasetIo, DepthAssociationWithinTolerance) {
  test::TempDir dir("assoc");
  // frame 1 has its nearest depth 30 ms away and is dropped
  write_fixture(dir.path(), {1.000, 1.100, 1.200}, {1.010, 1.130, 1.195});
  const Sequence seq = load_tum_sequence(dir.str());
  ASSERT_EQ(seq.size(), 2u);
  EXPECT_DOUBLE_EQ(seq.frames[0].t, 1.0);
  EXPECT_DOUBLE_EQ(seq.frames[1].t, 1.2);
  EXPECT_EQ(seq.frames[1].id, 1);
  EXPECT_NE(seq.frames[1].depth_path.find("depth/2.png"), std::string::npos);
  const Frame f = seq.load_frame(0);
  EXPECT_NEAR(f.depth.at(0, 0), 1.25, 1e-12);
  // default intrinsics without calib.txt
  EXPECT_EQ(seq.intrinsics.fx, 525.0);
  EXPECT_EQ(seq.intrinsics.width, 4);
  EXPECT_DOUBLE_EQ(seq.intrinsics.cx, 1.5);
}

TEST(DatasetIo, LoaderErrors) {
  test::TempDir empty("empty");
  EXPECT_EQ(code_of([&] { load_tum_sequence(empty.str()); }), ErrorCode::MissingIndexFile);

  write_text(empty.path() / "rgb.txt", "# nothing here\n");
  EXPECT_EQ(code_of([&] { load_tum_sequence(empty.str()); }), ErrorCode::NoAssociations);

  test::TempDir far("far");
  write_fixture(far.path(), {1.0, 2.0}, {1.5});
  EXPECT_EQ(code_of([&] { load_tum_sequence(far.str()); }), ErrorCode::NoAssociations);

  test::TempDir bad("bad");
  write_fixture(bad.path(), {1.0}, {1.0});
  write_text(bad.path() / "rgb.txt", "1.0 rgb/0.png\nnot-a-number rgb/0.png\n");
  const ErrorCode c = code_of([&] { load_tum_sequence(bad.str()); });
  EXPECT_EQ(c, ErrorCode::UnparsableLine);
  try {
    load_tum_sequence(bad.str());
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("rgb.txt:2"), std::string::npos) << e.what();
  }
}

TEST(DatasetIo, CalibrationAndExtrinsic) {
  test::TempDir dir("calib");
  write_fixture(dir.path(), {1.0}, {1.0});
  write_text(dir.path() / "calib.txt", "# fx fy cx cy w h\n100 101 2 1.5 4 3\n0.1 0 0 0 0 0.7071067811865476 0.7071067811865476\n");
  const Sequence seq = load_tum_sequence(dir.str());
  EXPECT_EQ(seq.intrinsics.fx, 100.0);
  EXPECT_EQ(seq.intrinsics.fy, 101.0);
  EXPECT_EQ(seq.intrinsics.cy, 1.5);
  EXPECT_NEAR(seq.imu_to_camera.translation.x(), 0.1, 1e-15);
  EXPECT_NEAR(rotation_angle(seq.imu_to_camera.rotation, Quat(Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ()))), 0.0, 1e-7);

  write_text(dir.path() / "calib.txt", "100 101 2 1.5 8 8\n");
  EXPECT_EQ(code_of([&] { load_tum_sequence(dir.str()).load_frame(0); }), ErrorCode::ShapeMismatch);
}

TEST(DatasetIo, ImuCsvParsing) {
  test::TempDir dir("imu");
  const std::string path = (dir.path() / "imu.txt").string();
  std::vector<ImuSample> samples;
  for (int i = 0; i < 5; ++i) samples.push_back({0.01 * i, Vec3(i, -i, 0.5 * i), Vec3(0.1, 0.2, 0.3 * i)});
  write_imu(path, samples);
  const auto back = load_imu(path);
  ASSERT_EQ(back.size(), samples.size());
  for (size_t i = 0; i < back.size(); ++i) {
    EXPECT_NEAR(back[i].t, samples[i].t, 1e-12);
    EXPECT_LT((back[i].accel - samples[i].accel).norm(), 1e-12);
  }

  write_text(path, "t,ax,ay,az,gx,gy,gz\n0.0,1,2,3,4,5,6\n0.01,1,2,x,4,5,6\n");
  try {
    load_imu(path);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnparsableLine);
    EXPECT_NE(std::string(e.what()).find("imu.txt:3"), std::string::npos) << e.what();
  }
  write_text(path, "t,ax,ay,az,gx,gy,gz\n0.0,1,2,3,4,5,6\n0.02,1,2,3,4,5,6\n0.01,1,2,3,4,5,6\n");
  EXPECT_EQ(code_of([&] { load_imu(path); }), ErrorCode::NonMonotoneTimestamps);
  write_text(path, "0.0,1,2,3,4,5,6\n");
  EXPECT_EQ(code_of([&] { load_imu(path); }), ErrorCode::UnparsableLine);
}

TEST(DatasetIo, GravityCompensationOption) {
  const SyntheticData data = generate_synthetic(small_spec());
  test::TempDir dir("grav");
  Sequence raw = data.sequence;
  for (auto& s : raw.imu) s.accel -= Vec3(0.0, 0.0, -9.81);  // as a sensor would report
  write_tum_sequence(dir.str(), raw);
  TumOptions opt;
  opt.compensate_gravity = true;
  const Sequence seq = load_tum_sequence(dir.str(), opt);
  for (size_t i = 0; i < seq.imu.size(); ++i)
    EXPECT_LT((seq.imu[i].accel - data.sequence.imu[i].accel).norm(), 1e-9);
}

TEST(DatasetIo, TrajectoryRoundTripAndInterpolation) {
  std::mt19937_64 rng(91);
  std::vector<StampedPose> traj;
  for (int i = 0; i < 10; ++i) traj.push_back({100.0 + 0.1 * i, test::random_pose(rng)});
  test::TempDir dir("traj");
  const std::string path = (dir.path() / "t.txt").string();
  write_trajectory(path, traj);
  const auto back = load_trajectory(path);
  ASSERT_EQ(back.size(), traj.size());
  for (size_t i = 0; i < back.size(); ++i) {
    EXPECT_NEAR(back[i].t, traj[i].t, 1e-9);
    EXPECT_LT((back[i].pose.translation - traj[i].pose.translation).norm(), 1e-9);
    EXPECT_LT(rotation_angle(back[i].pose.rotation, traj[i].pose.rotation), 1e-8);
  }
  const auto mid = interpolate_pose(traj, 100.05);
  ASSERT_TRUE(mid.has_value());
  EXPECT_LT((mid->translation - 0.5 * (traj[0].pose.translation + traj[1].pose.translation)).norm(), 1e-9);
  EXPECT_NEAR(rotation_angle(mid->rotation, traj[0].pose.rotation),
              0.5 * rotation_angle(traj[0].pose.rotation, traj[1].pose.rotation), 1e-9);
  EXPECT_FALSE(interpolate_pose(traj, 99.0).has_value());
  EXPECT_FALSE(interpolate_pose(traj, 101.5).has_value());
  const auto exact = interpolate_pose(traj, 100.3);
  ASSERT_TRUE(exact.has_value());
  EXPECT_LT((exact->translation - traj[3].pose.translation).norm(), 1e-9);
}

TEST(DatasetIo, SyntheticGenerationIsBitDeterministic) {
  SyntheticSceneSpec spec = small_spec();
  spec.pixel_noise = 0.01;
  spec.depth_noise = 0.002;
  spec.accel_noise = 0.05;
  spec.seed = 5;
  const SyntheticData a = generate_synthetic(spec), b = generate_synthetic(spec);
  EXPECT_EQ(a.map.checksum(), b.map.checksum());
  for (size_t i = 0; i < a.sequence.size(); ++i) {
    EXPECT_EQ(a.sequence.load_frame(i).rgb.data, b.sequence.load_frame(i).rgb.data);
    EXPECT_EQ(a.sequence.load_frame(i).depth.data, b.sequence.load_frame(i).depth.data);
  }
  for (size_t i = 0; i < a.sequence.imu.size(); ++i) EXPECT_EQ(a.sequence.imu[i].accel, b.sequence.imu[i].accel);
  spec.seed = 6;
  EXPECT_NE(generate_synthetic(spec).sequence.load_frame(0).rgb.data, a.sequence.load_frame(0).rgb.data);
}

TEST(DatasetIo, SyntheticGroundTruthMatchesTrajectory) {
  const SyntheticSceneSpec spec = small_spec();
  const SyntheticData data = generate_synthetic(spec);
  ASSERT_EQ(data.sequence.ground_truth.size(), static_cast<size_t>(spec.frames));
  EXPECT_LT((data.sequence.ground_truth[0].pose.matrix() - Mat4::Identity()).norm(), 1e-12);
  for (const auto& gt : data.sequence.ground_truth) {
    const Pose p = sample_trajectory(spec, gt.t).pose;
    EXPECT_LT((p.matrix() - gt.pose.matrix()).norm(), 1e-12);
  }
  // the rendered frame is the ground-truth map seen from the ground-truth pose
  const Frame f = data.sequence.load_frame(3);
  const RenderOutput r = render(data.map, data.sequence.ground_truth[3].pose, spec.intrinsics());
  EXPECT_EQ(r.color.data, f.rgb.data);
}

TEST(DatasetIo, SquareLoopVisitsCornersAtRest) {
  SyntheticSceneSpec spec;  // 40 frames, square
  const double T = spec.duration();
  const Vec3 corners[] = {{0, 0, 0}, {spec.extent, 0, 0}, {spec.extent, -spec.extent, 0}, {0, -spec.extent, 0}};
  for (int c = 0; c <= 4; ++c) {
    const TrajectoryState s = sample_trajectory(spec, T * c / 4.0);
    EXPECT_LT((s.pose.translation - corners[c % 4]).norm(), 1e-9) << c;
    EXPECT_LT(s.velocity.norm(), 1e-9) << c;
  }
}

TEST(DatasetIo, AnalyticImuMatchesTrajectoryDerivatives) {
  SyntheticSceneSpec spec;
  spec.trajectory = TrajectoryKind::Circle;
  const auto imu = analytic_imu(spec, 100.0);
  const double h = 1e-5;
  for (size_t i = 10; i < imu.size() - 10; i += 37) {
    const double t = imu[i].t;
    const TrajectoryState s = sample_trajectory(spec, t);
    const Vec3 v_fd = (sample_trajectory(spec, t + h).pose.translation - sample_trajectory(spec, t - h).pose.translation) / (2 * h);
    EXPECT_LT((v_fd - s.velocity).norm(), 1e-6);
    const Vec3 a_fd = (sample_trajectory(spec, t + h).velocity - sample_trajectory(spec, t - h).velocity) / (2 * h);
    EXPECT_LT((a_fd - s.acceleration).norm(), 1e-5);
    EXPECT_LT((imu[i].accel - s.pose.rotation_matrix().transpose() * s.acceleration).norm(), 1e-12);
  }
}

// The circle keeps turning at constant speed; the square's rest-to-rest legs
// cancel the leading error term and converge faster than first order.
double imu_endpoint_error(double rate) {
  SyntheticSceneSpec spec;
  spec.trajectory = TrajectoryKind::Circle;
  const auto imu = analytic_imu(spec, rate);
  const double T = spec.duration();
  const TrajectoryState s0 = sample_trajectory(spec, 0.0);
  const Vec3 v0 = s0.pose.rotation_matrix().transpose() * s0.velocity;
  const Preintegration p = preintegrate(imu, {v0, 0.0}, 0.0, T);
  const Pose truth = compose(inverse(s0.pose), sample_trajectory(spec, T).pose);
  return (p.relative.translation - truth.translation).norm();
}

TEST(DatasetIo, SyntheticImuDoubleIntegrationConvergesFirstOrder) {
  const double e100 = imu_endpoint_error(100.0), e200 = imu_endpoint_error(200.0);
  EXPECT_GT(e100, 0.0);
  EXPECT_NEAR(e100 / e200, 2.0, 0.1);
}

TEST(DatasetIo, DepthProvider) {
  const SyntheticData data = generate_synthetic(small_spec());
  Frame f = data.sequence.load_frame(2);
  const DepthEstimate sensor = depth_provider(f, DepthSource::Sensor);
  EXPECT_TRUE(sensor.metric);
  EXPECT_EQ(sensor.values.data, f.depth.data);

  DepthEmulation emu;
  emu.seed = 3;
  const DepthEstimate rel = depth_provider(f, DepthSource::EmulatedRelative, emu);
  EXPECT_FALSE(rel.metric);
  EXPECT_EQ(depth_provider(f, DepthSource::EmulatedRelative, emu).values.data, rel.values.data);
  // strongly correlated with true inverse depth, but not an affine copy of it
  Image inv(f.depth.width, f.depth.height, 1);
  PixelMask valid(f.depth.width, f.depth.height, false);
  for (size_t p = 0; p < inv.data.size(); ++p)
    if (f.depth.data[p] > 0.0) {
      inv.data[p] = 1.0 / f.depth.data[p];
      valid.data[p] = 1;
    }
  const double loss = pearson_depth(rel.values, inv, valid).value;
  EXPECT_LT(loss, 0.2);
  EXPECT_GT(loss, 1e-6);
  emu.warp_amplitude = 0.0;
  EXPECT_NEAR(pearson_depth(depth_provider(f, DepthSource::EmulatedRelative, emu).values, inv, valid).value, 0.0, 1e-9);

  f.depth = Image{};
  EXPECT_EQ(code_of([&] { depth_provider(f, DepthSource::Sensor); }), ErrorCode::NoSensorDepth);
}

}  // namespace
}  // namespace mm3dgs
