// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "mimu/imu_update.hpp"
#include "helpers.hpp"

using namespace mimu;
using mimu::test::random_state;

TEST_CASE("predicted IMU measurement", "[imu]") {
  BodyState body;
  body.a = Vec3(0, 0, kGravityMag);  // stationary: specific force opposes gravity
  std::vector<ImuCalibration> imus(2);
  imus[1].p_BI = Vec3(0.1, 0, 0);
  FilterState x = make_filter_state(body, imus);

  SECTION("stationary aligned body reads gravity reaction, zero rate") {
    const Vec6 z = predict_imu_measurement(x, 0);
    REQUIRE((z.head<3>() - Vec3(0, 0, kGravityMag)).norm() < 1e-12);
    REQUIRE(z.tail<3>().norm() == 0.0);
  }

  SECTION("centripetal term from a spinning lever arm") {
    x.body.a.setZero();
    x.body.w = Vec3(0, 0, 2.0);
    const Vec6 z = predict_imu_measurement(x, 1);
    REQUIRE((z.head<3>() - Vec3(-0.4, 0, 0)).norm() < 1e-12);
  }

  SECTION("gyro bias passes through") {
    x.body.a.setZero();
    x.imus[0].b_w = Vec3(0.01, 0, 0);
    const Vec6 z = predict_imu_measurement(x, 0);
    REQUIRE((z.tail<3>() - Vec3(0.01, 0, 0)).norm() == 0.0);
  }

  SECTION("bad index is rejected") {
    REQUIRE_THROWS_AS(predict_imu_measurement(x, 2), std::invalid_argument);
  }
}

TEST_CASE("measurement jacobian blocks", "[imu]") {
  SECTION("specific-force block is identity at identity orientations") {
    BodyState body;
    std::vector<ImuCalibration> imus(1);
    const FilterState x = make_filter_state(body, imus);
    const auto H = compute_H_body(x, 0);
    REQUIRE((H.block<3, 3>(0, kErrAcc) - Mat3::Identity()).norm() < 1e-12);
  }

  SECTION("angular-acceleration block is the transposed lever-arm skew") {
    BodyState body;
    std::vector<ImuCalibration> imus(2);
    imus[1].p_BI = Vec3(0.1, 0, 0);
    const FilterState x = make_filter_state(body, imus);
    const auto H = compute_H_body(x, 1);
    REQUIRE((H.block<3, 3>(0, kErrAlpha) - skew(Vec3(0.1, 0, 0)).transpose()).norm() <
            1e-12);
  }

  SECTION("accelerometer bias block is always identity") {
    std::mt19937 rng(17);
    const FilterState x = random_state(2, rng);
    const auto Hc = compute_H_calib(x, 1, false);
    REQUIRE((Hc.block<3, 3>(0, kImuErrBa) - Mat3::Identity()).norm() == 0.0);
    REQUIRE((Hc.block<3, 3>(3, kImuErrBw) - Mat3::Identity()).norm() == 0.0);
  }

  SECTION("lever-arm sensitivity vanishes without rotation") {
    BodyState body;
    body.a = Vec3(0, 0, kGravityMag);
    std::vector<ImuCalibration> imus(2);
    imus[1].p_BI = Vec3(0.1, -0.05, 0.2);
    const FilterState x = make_filter_state(body, imus);
    const auto Hc = compute_H_calib(x, 1, false);
    REQUIRE(Hc.block<3, 3>(0, kImuErrPos).norm() == 0.0);
  }

  SECTION("pinned extrinsic columns are forced to zero") {
    std::mt19937 rng(18);
    FilterState x = random_state(2, rng, true);
    const auto Hc = compute_H_calib(x, 0);
    REQUIRE(Hc.leftCols<6>().norm() == 0.0);
    REQUIRE(Hc.rightCols<6>().norm() > 0.0);
  }

  SECTION("full jacobian matches central finite differences") {
    std::mt19937 rng(19);
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const int n_imus = trial % 3 + 1;
      const FilterState x = random_state(n_imus, rng);
      const int i = trial % n_imus;
      const auto h = [&](const FilterState& y) {
        return VecX(predict_imu_measurement(y, i));
      };
      const MatX fd = mimu::test::numeric_jacobian(h, x, 6);
      MatX analytic = MatX::Zero(6, x.dim());
      analytic.leftCols<18>() = compute_H_body(x, i);
      analytic.middleCols<12>(imu_err_base(i)) = compute_H_calib(x, i, false);
      worst = std::max(worst, mimu::test::relative_difference(analytic, fd));
    }
    REQUIRE(worst < 1e-5);
  }
}

TEST_CASE("ekf update mechanics", "[imu]") {
  std::mt19937 rng(20);

  SECTION("scalar textbook case embedded in one coordinate") {
    BodyState body;
    std::vector<ImuCalibration> imus(1);
    FilterState x = make_filter_state(body, imus);
    x.P = MatX::Identity(x.dim(), x.dim());
    zero_pinned_blocks(x);
    MatX H = MatX::Zero(1, x.dim());
    H(0, kErrPos) = 1.0;
    VecX r(1);
    r(0) = 1.0;
    const MatX R = MatX::Identity(1, 1);
    const FilterState y = ekf_update(x, H, r, R);
    REQUIRE(y.body.p.x() == Catch::Approx(0.5).epsilon(1e-12));
    REQUIRE(y.P(0, 0) == Catch::Approx(0.5).epsilon(1e-12));
    REQUIRE(y.P(1, 1) == Catch::Approx(1.0).epsilon(1e-12));
  }

  SECTION("zero innovation leaves the state but shrinks covariance") {
    FilterState x = random_state(2, rng);
    x.P = mimu::test::random_psd(x.dim(), rng) + MatX::Identity(x.dim(), x.dim());
    const MatX H = assemble_imu_jacobian(x, 1, true);
    const MatX R = 0.01 * MatX::Identity(6, 6);
    const FilterState y = ekf_update(x, H, VecX::Zero(6), R);
    REQUIRE(state_boxminus(y, x).norm() < 1e-12);
    REQUIRE(y.P.trace() < x.P.trace());
  }

  SECTION("trace never grows under the optimal gain") {
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
      FilterState x = random_state(1, rng);
      x.P = mimu::test::random_psd(x.dim(), rng);
      MatX H(6, x.dim());
      for (int a = 0; a < H.rows(); ++a)
        for (int b = 0; b < H.cols(); ++b) H(a, b) = nd(rng);
      const MatX R =
          mimu::test::random_psd(6, rng, 0.3) + 0.1 * MatX::Identity(6, 6);
      VecX r(6);
      for (int a = 0; a < 6; ++a) r(a) = nd(rng);
      const FilterState y = ekf_update(x, H, r, R);
      REQUIRE(y.P.trace() <= x.P.trace() + 1e-9);
    }
  }

  SECTION("symmetry and eigenvalue floor hold after updates") {
    FilterState x = random_state(3, rng);
    x.P = mimu::test::random_psd(x.dim(), rng);
    for (int k = 0; k < 20; ++k) {
      const MatX H = assemble_imu_jacobian(x, k % 3, true);
      VecX r = VecX::Constant(6, 0.01);
      x = ekf_update(x, H, r, 0.05 * MatX::Identity(6, 6));
      REQUIRE(covariance_health(x.P).empty());
    }
  }

  SECTION("unsolvable innovation covariance raises a divergence") {
    FilterState x = random_state(1, rng);
    x.P = MatX::Zero(x.dim(), x.dim());
    const MatX H = MatX::Zero(6, x.dim());
    const MatX R = MatX::Zero(6, 6);  // singular S
    REQUIRE_THROWS_AS(ekf_update(x, H, VecX::Zero(6), R), FilterDivergence);
  }
}

TEST_CASE("imu measurement processing", "[imu]") {
  BodyState body;
  body.a = Vec3(0.3, -0.1, kGravityMag);
  body.w = Vec3(0.2, 0.1, -0.3);
  body.alpha = Vec3(0.05, -0.02, 0.1);
  std::vector<ImuCalibration> imus(2);
  imus[1].p_BI = Vec3(0.12, -0.03, 0.05);
  imus[1].q_BI = quat_from_rotvec(Vec3(0.05, 0.2, -0.1));

  const auto make_sample = [](const FilterState& x, int i, double t) {
    ImuSample z;
    z.t = t;
    z.imu_id = i;
    const Vec6 pred = predict_imu_measurement(x, i);
    z.accel = pred.head<3>();
    z.gyro = pred.tail<3>();
    z.R = Eigen::Matrix<double, 6, 6>::Identity() * 1e-4;
    return z;
  };

  SECTION("a perfect measurement of a consistent state changes nothing") {
    FilterState x = make_filter_state(body, imus);
    const FilterState before = x;
    const auto outcome = process_imu(x, make_sample(x, 1, x.t), ProcessNoise{},
                                     ImuUpdateOptions{});
    REQUIRE(outcome == MeasurementOutcome::kFused);
    REQUIRE(state_boxminus(x, before).cwiseAbs().maxCoeff() < 1e-9);
  }

  SECTION("stale samples are dropped without touching the state") {
    FilterState x = make_filter_state(body, imus);
    x.t = 10.0;
    ImuSample z = make_sample(x, 0, 9.9);
    const FilterState before = x;
    REQUIRE(process_imu(x, z, ProcessNoise{}, ImuUpdateOptions{}) ==
            MeasurementOutcome::kDroppedStale);
    REQUIRE(state_boxminus(x, before).norm() < 1e-12);
    REQUIRE(x.t == 10.0);
  }

  SECTION("chi-square gate rejects a wild innovation when enabled") {
    FilterState x = make_filter_state(body, imus);
    x.P *= 1e-12;  // innovation covariance is then essentially R
    ImuSample z = make_sample(x, 1, x.t);
    z.accel += Vec3(2.0, 2.0, 2.0)
                   .normalized() * std::sqrt(20.0);  // Mahalanobis^2 = 20 with R = I
    z.R = Eigen::Matrix<double, 6, 6>::Identity();
    ImuUpdateOptions gated;
    gated.chi2_gate = true;
    FilterState xg = x;
    REQUIRE(process_imu(xg, z, ProcessNoise{}, gated) ==
            MeasurementOutcome::kDroppedGate);
    FilterState xu = x;
    REQUIRE(process_imu(xu, z, ProcessNoise{}, ImuUpdateOptions{}) ==
            MeasurementOutcome::kFused);
  }

  SECTION("same-timestamp updates are order invariant to first order") {
    FilterState x = make_filter_state(body, imus);
    ImuSample z0 = make_sample(x, 0, x.t);
    ImuSample z1 = make_sample(x, 1, x.t);
    // keep innovations small: the orderings agree only to first order
    z0.accel += Vec3(0.001, -0.0005, 0.00075);
    z1.gyro += Vec3(-0.0002, 0.0003, 0.0001);

    FilterState a = x;
    process_imu(a, z0, ProcessNoise{}, ImuUpdateOptions{});
    process_imu(a, z1, ProcessNoise{}, ImuUpdateOptions{});
    FilterState b = x;
    process_imu(b, z1, ProcessNoise{}, ImuUpdateOptions{});
    process_imu(b, z0, ProcessNoise{}, ImuUpdateOptions{});
    REQUIRE(state_boxminus(a, b).cwiseAbs().maxCoeff() < 1e-6);
  }
}
