#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "voila/error.hpp"
#include "voila/gaze/heatmap.hpp"
#include "voila/gaze/sweep.hpp"
#include "voila/gaze/track.hpp"

using namespace voila::gaze;

namespace {

PointTrack track_of(std::initializer_list<std::pair<double, double>> xy) {
  PointTrack t;
  double time = 0.0;
  for (const auto& [x, y] : xy) t.points.push_back({x, y, time += 0.1});
  return t;
}

Heatmap from_values(std::size_t h, std::size_t w, const std::vector<double>& v) { return Heatmap(h, w, v); }

}  // namespace

TEST_SUITE("gaze") {
  TEST_CASE("kernel origin is the closed-form peak") {
    const auto k = gaussian_kernel(1.0, 3);
    CHECK(std::fabs(k(3, 3) - 1.0 / (2.0 * std::numbers::pi)) < 1e-12);
    const auto k2 = gaussian_kernel(2.5, kernel_radius(2.5));
    const std::size_t r = kernel_radius(2.5);
    CHECK(k2(r, r) == doctest::Approx(1.0 / (2.0 * std::numbers::pi * 6.25)).epsilon(1e-14));
    // symmetric in both axes
    CHECK(k2(r - 2, r + 1) == k2(r + 2, r - 1));
    CHECK(k2(r, r + 3) == k2(r + 3, r));
  }

  TEST_CASE("kernel radius and default sigma") {
    CHECK(kernel_radius(1.0) == 3);
    CHECK(kernel_radius(2.56) == 8);
    CHECK(kernel_radius(0.1) == 1);
    CHECK(default_sigma(64, 64) == doctest::Approx(2.56));
    CHECK(default_sigma(32, 100) == doctest::Approx(1.28));
    CHECK_THROWS_AS(gaussian_kernel(0.0, 3), voila::ParameterError);
  }

  TEST_CASE("nearest pixel floors and clamps the far edge") {
    CHECK(nearest_pixel(0.0, 64) == 0);
    CHECK(nearest_pixel(0.5, 64) == 32);
    CHECK(nearest_pixel(0.999, 64) == 63);
    CHECK(nearest_pixel(1.0, 64) == 63);
  }

  TEST_CASE("single interior point matches the normalized Gaussian") {
    const double sigma = 1.5;
    const auto map = points_to_heatmap(track_of({{0.5, 0.5}}), 32, 32, sigma);
    const auto expect = oracle::single_point_map(32, 32, 16, 16, sigma, static_cast<long>(kernel_radius(sigma)));
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(map.values()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }

  TEST_CASE("corner points keep unit mass after truncation") {
    const auto map = points_to_heatmap(track_of({{0.0, 0.0}, {1.0, 1.0}, {0.0, 1.0}}), 16, 16, 3.0);
    CHECK(std::fabs(map.total_mass() - 1.0) < 1e-9);
    for (const double v : map.values()) CHECK(v >= 0.0);
    // both corners get identical mass by symmetry
    CHECK(map.at(0, 0) == doctest::Approx(map.at(15, 15)).epsilon(1e-12));
  }

  TEST_CASE("heatmap preconditions") {
    CHECK_THROWS_AS(points_to_heatmap(PointTrack{}, 16, 16, 1.0), voila::EmptyInputError);
    CHECK_THROWS_AS(points_to_heatmap(track_of({{0.5, 0.5}}), 4, 16, 1.0), voila::ParameterError);
    CHECK_THROWS_AS(Heatmap(2, 2).normalize(), voila::EmptyInputError);
  }

  TEST_CASE("ingest clamps out-of-range points and rejects time reversal") {
    const auto in = ingest_points({{-0.2, 0.5, 0.0}, {0.5, 1.3, 0.1}, {0.4, 0.4, 0.2}}, TrackSource::gaze);
    CHECK(in.clamped_points == 2);
    CHECK(in.track.points[0].x == 0.0);
    CHECK(in.track.points[1].y == 1.0);
    CHECK_THROWS_AS(ingest_points({{0.1, 0.1, 1.0}, {0.2, 0.2, 0.5}}, TrackSource::trace), voila::FormatError);
    CHECK_THROWS_AS(ingest_points({{std::nan(""), 0.1, 1.0}}, TrackSource::trace), voila::FormatError);
  }

  TEST_CASE("track JSON round trip") {
    PointTrack t = track_of({{0.1, 0.2}, {0.3, 0.4}});
    t.source = TrackSource::gaze;
    const auto back = track_from_json(nlohmann::json::parse(track_to_json(t).dump()));
    CHECK(back.track == t);
    CHECK(back.clamped_points == 0);
    CHECK_THROWS_AS(track_from_json(nlohmann::json{{"points", {{0.1, 0.2}}}}), voila::FormatError);
    CHECK_THROWS_AS(track_from_json(nlohmann::json{{"source", "eye"}, {"points", nlohmann::json::array()}}),
                    voila::FormatError);
  }

  TEST_CASE("downsampling keeps every rate-th point from the first") {
    PointTrack t;
    for (int i = 0; i < 10; ++i) t.points.push_back({0.1 * i, 0.0, 0.1 * i});
    const auto d = downsample_track(t, 3);
    REQUIRE(d.size() == 4);
    CHECK(d.points[1] == t.points[3]);
    CHECK(d.points[3] == t.points[9]);
    CHECK(downsample_track(t, 1) == t);
    CHECK(downsample_track(t, 50).size() == 1);
    CHECK_THROWS_AS(downsample_track(t, 0), voila::ParameterError);
  }

  TEST_CASE("EMD agrees with the brute-force oracle") {
    std::mt19937_64 rng(42);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 1 + rng() % 64;
      const auto p = oracle::random_histogram(rng, n);
      const auto q = oracle::random_histogram(rng, n);
      const double got = cumulative_emd(from_values(1, n, p), from_values(1, n, q));
      CHECK(std::fabs(got - oracle::brute_force_emd(p, q)) < 1e-12);
    }
  }

  TEST_CASE("EMD identities and asymmetry") {
    const auto p = from_values(1, 4, {0.25, 0.25, 0.25, 0.25});
    const auto q = from_values(1, 4, {1.0, 0.0, 0.0, 0.0});
    CHECK(cumulative_emd(p, p) == 0.0);
    // F(P) = .25 .5 .75 1, F(Q) = 1 1 1 1: numerator 1.5, denominators 2.5 vs 4
    CHECK(cumulative_emd(p, q) == doctest::Approx(1.5 / 2.5).epsilon(1e-15));
    CHECK(cumulative_emd(q, p) == doctest::Approx(1.5 / 4.0).epsilon(1e-15));
    CHECK_THROWS_AS(cumulative_emd(p, from_values(2, 2, {0.25, 0.25, 0.25, 0.25})), voila::ShapeError);
    CHECK_THROWS_AS(cumulative_emd(p, from_values(1, 4, {0.5, 0.5, 0.5, 0.5})), voila::PreconditionError);
  }

  TEST_CASE("mean heatmap and patches") {
    const auto a = points_to_heatmap(track_of({{0.2, 0.2}}), 16, 16, 1.0);
    const auto b = points_to_heatmap(track_of({{0.8, 0.7}}), 16, 16, 1.0);
    const std::vector<Heatmap> maps{a, b};
    const auto m = mean_heatmap(maps);
    CHECK(m.at(3, 3) == doctest::Approx((a.at(3, 3) + b.at(3, 3)) / 2));
    const auto patches = heatmap_to_patches(m, 4, 4);
    CHECK(patches.rows() == 16);
    CHECK(patches.cols() == 16);
    CHECK(patches(5, 0) == m.at(4, 4));
    CHECK(patches(15, 15) == m.at(15, 15));
    CHECK_THROWS_AS(heatmap_to_patches(m, 3, 4), voila::ShapeError);
  }

  TEST_CASE("VHM1 round trip is byte exact") {
    const auto map = points_to_heatmap(track_of({{0.3, 0.6}, {0.7, 0.1}}), 24, 20, 1.7);
    const auto bytes = encode_vhm1(map);
    CHECK(bytes.size() == 12 + 4 * 24 * 20);
    const auto back = decode_vhm1(bytes);
    CHECK(back.height() == 24);
    CHECK(back.width() == 20);
    CHECK(encode_vhm1(back) == bytes);
    auto bad = bytes;
    bad[0] = 'X';
    CHECK_THROWS_AS(decode_vhm1(bad), voila::FormatError);
    bad = bytes;
    bad.pop_back();
    CHECK_THROWS_AS(decode_vhm1(bad), voila::FormatError);
  }

  TEST_CASE("sweep ties go to the smaller rate") {
    // A single-point trace looks the same at every rate.
    const std::vector<PointTrack> gaze{track_of({{0.5, 0.5}, {0.4, 0.4}})};
    const std::vector<PointTrack> trace{track_of({{0.5, 0.5}})};
    const std::vector<std::size_t> rates{7, 3, 5};
    const auto r = sampling_rate_sweep(gaze, trace, rates, {16, 1.0, 1});
    CHECK(r.emd_values[0] == r.emd_values[1]);
    CHECK(r.argmin_rate == 3);
    CHECK_THROWS_AS(sampling_rate_sweep(gaze, {}, rates, {}), voila::EmptyInputError);
  }

  TEST_CASE("sweep values match a direct recomputation") {
    const auto pop = synth_population(3, 6, 120, 12, 3);
    const std::vector<std::size_t> rates{1, 4, 9};
    const auto r = sampling_rate_sweep(pop.gaze, pop.trace, rates, {32, 0.0, 3});
    const double sigma = default_sigma(32, 32);
    std::vector<Heatmap> g;
    for (const auto& t : pop.gaze) g.push_back(points_to_heatmap(t, 32, 32, sigma));
    const auto gm = mean_heatmap(g);
    for (std::size_t i = 0; i < rates.size(); ++i) {
      std::vector<Heatmap> tr;
      for (const auto& t : pop.trace) tr.push_back(points_to_heatmap(downsample_track(t, rates[i]), 32, 32, sigma));
      const auto tm = mean_heatmap(tr);
      std::vector<double> pv(gm.values().begin(), gm.values().end()), qv(tm.values().begin(), tm.values().end());
      CHECK(r.emd_values[i] == doctest::Approx(oracle::brute_force_emd(pv, qv)).epsilon(1e-12));
    }
  }

  TEST_CASE("synthetic tracks are deterministic and in range") {
    const auto a = synth_trace(11, 200, 3);
    CHECK(a == synth_trace(11, 200, 3));
    CHECK_FALSE(a == synth_trace(12, 200, 3));
    const auto g = synth_gaze(11, 20, 3);
    CHECK(g.size() == 20);
    for (const auto* t : {&a, &g}) {
      for (std::size_t i = 0; i < t->size(); ++i) {
        const auto& p = t->points[i];
        CHECK((p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0));
        if (i > 0) CHECK(p.t >= t->points[i - 1].t);
      }
    }
    const auto pop = synth_population(5, 4);
    CHECK(pop.gaze.size() == 4);
    CHECK(pop.trace.size() == 4);
  }

  TEST_CASE("parallel heatmaps equal the serial ones") {
    const auto pop = synth_population(9, 12);
    const auto serial = tracks_to_heatmaps(pop.trace, 32, 32, 1.28, 1);
    const auto par = tracks_to_heatmaps(pop.trace, 32, 32, 1.28, 5);
    CHECK(serial == par);
  }
}
