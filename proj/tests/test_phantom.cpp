#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>
#include <set>

#include "fetalus/phantom.hpp"

using namespace fetalus;
using namespace fetalus::phantom;

TEST_CASE("gen_image is deterministic in the spec") {
  PhantomSpec spec;
  spec.view_class = ViewClass::brain;
  spec.ga_days = 140;
  spec.pixel_spacing_mm = 0.2;
  spec.noise_seed = 1;
  auto a = gen_image(spec);
  auto b = gen_image(spec);
  CHECK(a.pixels.data == b.pixels.data);
  CHECK(a.fan_mask.data == b.fan_mask.data);
}

TEST_CASE("head ellipse grows strictly with gestational age") {
  PhantomSpec young, old;
  young.view_class = old.view_class = ViewClass::brain;
  young.pixel_spacing_mm = old.pixel_spacing_mm = 0.7;
  young.ga_days = 98;
  old.ga_days = 280;
  auto a = gen_image(young);
  auto b = gen_image(old);
  CHECK(b.head_semi_major_px > a.head_semi_major_px);

  // circumference in mm strictly increasing across the whole domain
  double prev = 0.0;
  for (int ga = 98; ga <= 280; ga += 7) {
    PhantomSpec s = young;
    s.ga_days = ga;
    auto img = gen_image(s);
    CHECK(img.head_circumference_mm > prev);
    prev = img.head_circumference_mm;
  }
}

TEST_CASE("head circumference ties to the median growth curve") {
  auto curves = synthetic_quantile_set();
  PhantomSpec spec;
  spec.view_class = ViewClass::brain;
  spec.ga_days = 150;
  spec.pixel_spacing_mm = 0.7;
  auto img = gen_image(spec);
  CHECK(img.head_circumference_mm == doctest::Approx(curves.at(50.0).hc_at(150)).epsilon(1e-9));
}

TEST_CASE("annotations are colored and recorded in the mask") {
  PhantomSpec spec;
  spec.view_class = ViewClass::femur;
  spec.ga_days = 160;
  spec.pixel_spacing_mm = 0.6;
  spec.annotation_text = "FL";
  auto img = gen_image(spec);
  CHECK(img.annotation_mask.count() > 0);
  for (int r = 0; r < img.rgb.h; ++r)
    for (int c = 0; c < img.rgb.w; ++c) {
      if (!img.annotation_mask.at(r, c)) continue;
      float mx = std::max({img.rgb.at(r, c, 0), img.rgb.at(r, c, 1), img.rgb.at(r, c, 2)});
      float mn = std::min({img.rgb.at(r, c, 0), img.rgb.at(r, c, 1), img.rgb.at(r, c, 2)});
      CHECK(mx - mn > 0.15f);
    }
}

TEST_CASE("fan mask is a single connected component") {
  PhantomSpec spec;
  spec.view_class = ViewClass::heart;
  auto img = gen_image(spec);
  // flood fill from any fan pixel must reach every fan pixel
  const auto& mask = img.fan_mask;
  int start = -1;
  for (std::size_t i = 0; i < mask.data.size(); ++i)
    if (mask.data[i]) {
      start = static_cast<int>(i);
      break;
    }
  REQUIRE(start >= 0);
  std::vector<char> seen(mask.data.size(), 0);
  std::vector<int> stack{start};
  seen[static_cast<std::size_t>(start)] = 1;
  std::size_t visited = 0;
  while (!stack.empty()) {
    int cur = stack.back();
    stack.pop_back();
    ++visited;
    int r = cur / mask.w, c = cur % mask.w;
    for (int dr = -1; dr <= 1; ++dr)
      for (int dc = -1; dc <= 1; ++dc) {
        int rr = r + dr, cc = c + dc;
        if (rr < 0 || rr >= mask.h || cc < 0 || cc >= mask.w) continue;
        int idx = rr * mask.w + cc;
        if (mask.data[static_cast<std::size_t>(idx)] && !seen[static_cast<std::size_t>(idx)]) {
          seen[static_cast<std::size_t>(idx)] = 1;
          stack.push_back(idx);
        }
      }
  }
  CHECK(visited == mask.count());
}

TEST_CASE("gen_image rejects invalid specs") {
  PhantomSpec spec;
  spec.ga_days = 97;
  CHECK_THROWS_AS(gen_image(spec), DomainError);
  spec.ga_days = 281;
  CHECK_THROWS_AS(gen_image(spec), DomainError);
  spec.ga_days = 140;
  spec.pixel_spacing_mm = 0.0;
  CHECK_THROWS_AS(gen_image(spec), DomainError);
}

TEST_CASE("gen_dataset assigns patients, quotas and splits deterministically") {
  DatasetOptions opt;
  opt.class_mix = {{"abdomen", 1}, {"brain", 1}, {"femur", 1}, {"heart", 1}, {"cervix", 1}};
  auto records = gen_dataset(10, 10, opt, 0);
  CHECK(records.size() == 100);
  std::set<std::string> patients;
  for (const auto& r : records) {
    patients.insert(r.record.patient_id);
    CHECK(r.record.ga_days.has_value());
    CHECK(r.record.pixel_spacing_mm.has_value());
  }
  CHECK(patients.size() == 10);

  auto again = gen_dataset(10, 10, opt, 0);
  for (std::size_t i = 0; i < records.size(); ++i) {
    CHECK(records[i].record.image_id == again[i].record.image_id);
    CHECK(records[i].record.labels == again[i].record.labels);
    CHECK(records[i].spec.noise_seed == again[i].spec.noise_seed);
  }
}

TEST_CASE("gen_dataset honors a degenerate class mix") {
  DatasetOptions opt;
  opt.class_mix = {{"brain", 1.0}};
  auto records = gen_dataset(10, 10, opt, 3);
  for (const auto& r : records) CHECK(r.spec.view_class == ViewClass::brain);

  opt.class_mix.clear();
  CHECK_THROWS_AS(gen_dataset(10, 10, opt, 3), DomainError);
  opt.class_mix = {{"brain", 1.0}};
  CHECK_THROWS_AS(gen_dataset(0, 10, opt, 3), DomainError);
}

TEST_CASE("gen_dataset class proportions within 5% for n >= 500") {
  DatasetOptions opt;
  opt.class_mix = {{"abdomen", 2}, {"brain", 3}, {"femur", 1}, {"heart", 2}, {"cervix", 2}};
  auto records = gen_dataset(50, 10, opt, 11);
  std::map<std::string, int> counts;
  for (const auto& r : records) counts[to_string(r.spec.view_class)]++;
  double total_w = 10.0;
  for (const auto& [name, w] : opt.class_mix) {
    double expect = 500.0 * w / total_w;
    CHECK(std::abs(counts[name] - expect) <= 0.05 * 500.0);
  }
}

TEST_CASE("gen_video produces deterministic oscillating heart sequences") {
  PhantomSpec spec;
  spec.view_class = ViewClass::heart;
  spec.ga_days = 150;
  spec.noise_seed = 5;

  auto frames = gen_video(spec, 16, false);
  CHECK(frames.size() == 16);
  for (const auto& f : frames) CHECK(f.fan_mask.count() > 0);

  auto frames2 = gen_video(spec, 16, false);
  for (std::size_t t = 0; t < frames.size(); ++t)
    CHECK(frames[t].pixels.data == frames2[t].pixels.data);

  // frames differ over time (beating)
  CHECK(frames[0].pixels.data != frames[4].pixels.data);

  CHECK_THROWS_AS(gen_video(spec, 15, false), DomainError);
  CHECK_THROWS_AS(gen_video(spec, 129, false), DomainError);
  PhantomSpec bad = spec;
  bad.view_class = ViewClass::brain;
  CHECK_THROWS_AS(gen_video(bad, 16, false), DomainError);
}

TEST_CASE("chd perturbation shrinks one chamber in every frame") {
  PhantomSpec spec;
  spec.view_class = ViewClass::heart;
  spec.ga_days = 160;
  spec.noise_seed = 9;
  auto normal = gen_video(spec, 128, false);
  auto chd = gen_video(spec, 128, true);
  REQUIRE(normal.size() == 128);
  for (std::size_t t = 0; t < normal.size(); ++t) {
    auto n_mask = normal[t].structure("chamber_lv");
    auto c_mask = chd[t].structure("chamber_lv");
    REQUIRE(n_mask != nullptr);
    REQUIRE(c_mask != nullptr);
    CHECK(c_mask->count() < n_mask->count());
  }
}

TEST_CASE("pixel-space nearest-centroid classifier separates the 5 views") {
  DatasetOptions opt;
  opt.class_mix = {{"abdomen", 1}, {"brain", 1}, {"femur", 1}, {"heart", 1}, {"cervix", 1}};
  auto records = gen_dataset(50, 10, opt, 42);
  REQUIRE(records.size() == 500);

  // 32x32 downsampled pixel features
  auto features = [](const PhantomImage& img) {
    std::vector<double> f(32 * 32, 0.0);
    int block = kCanvas / 32;
    for (int r = 0; r < kCanvas; ++r)
      for (int c = 0; c < kCanvas; ++c)
        f[static_cast<std::size_t>((r / block) * 32 + (c / block))] += img.pixels.at(r, c);
    return f;
  };

  std::map<std::string, std::vector<double>> centroid;
  std::map<std::string, int> counts;
  std::vector<std::pair<std::string, std::vector<double>>> all;
  for (const auto& r : records) {
    auto img = gen_image(r.spec);
    auto f = features(img);
    std::string cls = to_string(r.spec.view_class);
    auto& cent = centroid[cls];
    if (cent.empty()) cent.assign(f.size(), 0.0);
    for (std::size_t i = 0; i < f.size(); ++i) cent[i] += f[i];
    counts[cls]++;
    all.emplace_back(cls, std::move(f));
  }
  for (auto& [cls, cent] : centroid)
    for (auto& v : cent) v /= counts[cls];

  int correct = 0;
  for (const auto& [cls, f] : all) {
    std::string best;
    double best_d = 1e300;
    for (const auto& [ccls, cent] : centroid) {
      double d = 0;
      for (std::size_t i = 0; i < f.size(); ++i) d += (f[i] - cent[i]) * (f[i] - cent[i]);
      if (d < best_d) {
        best_d = d;
        best = ccls;
      }
    }
    correct += (best == cls);
  }
  CHECK(static_cast<double>(correct) / static_cast<double>(all.size()) >= 0.95);
}
