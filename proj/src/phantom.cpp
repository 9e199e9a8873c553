#include "fetalus/phantom.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>

namespace fetalus::phantom {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Fan geometry: apex near the top edge, opening downward.
constexpr double kApexX = 128.0, kApexY = 8.0;
constexpr double kFanHalfAngle = 40.0 * kPi / 180.0;
constexpr double kFanRadiusMin = 20.0, kFanRadiusMax = 240.0;

// Anatomy is centered here, comfortably inside the fan.
constexpr double kBodyX = 128.0, kBodyY = 148.0;

// Head ellipse aspect (minor/major) and its Ramanujan circumference factor:
// C = pi * k * a with k = 3(1+r) - sqrt((3+r)(1+3r)).
constexpr double kHeadAspect = 0.78;

double head_circ_factor() {
  const double r = kHeadAspect;
  return 3.0 * (1.0 + r) - std::sqrt((3.0 + r) * (1.0 + 3.0 * r));
}

const QuantileSet& reference_curves() {
  static const QuantileSet set = synthetic_quantile_set();
  return set;
}

bool in_fan(int r, int c) {
  double dy = r - kApexY, dx = c - kApexX;
  double rad = std::hypot(dx, dy);
  if (rad < kFanRadiusMin || rad > kFanRadiusMax) return false;
  return std::abs(std::atan2(dx, dy)) <= kFanHalfAngle;
}

// Coordinates of (r,c) in a rotated ellipse frame centered at (cx,cy).
struct Frame2 {
  double cx, cy, cos_t, sin_t;
  Frame2(double x, double y, double angle_deg)
      : cx(x), cy(y), cos_t(std::cos(angle_deg * kPi / 180.0)),
        sin_t(std::sin(angle_deg * kPi / 180.0)) {}
  std::pair<double, double> local(double c, double r) const {
    double dx = c - cx, dy = r - cy;
    return {dx * cos_t + dy * sin_t, -dx * sin_t + dy * cos_t};
  }
};

double ellipse_q(const Frame2& f, double c, double r, double a, double b) {
  auto [u, v] = f.local(c, r);
  return std::sqrt((u / a) * (u / a) + (v / b) * (v / b));
}

double dist_to_segment(double px, double py, double x0, double y0, double x1, double y1) {
  double vx = x1 - x0, vy = y1 - y0;
  double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((px - x0) * vx + (py - y0) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  return std::hypot(px - (x0 + t * vx), py - (y0 + t * vy));
}

// Deterministic text-like glyphs: a 5x7 bit pattern per character.
std::array<std::uint8_t, 7> glyph_rows(char ch) {
  std::uint64_t h = derive_seed(0x91f5, {static_cast<std::uint64_t>(ch)});
  std::array<std::uint8_t, 7> rows{};
  int set_bits = 0;
  for (int r = 0; r < 7; ++r) {
    rows[static_cast<std::size_t>(r)] = static_cast<std::uint8_t>((h >> (r * 5)) & 0x1F);
    for (int b = 0; b < 5; ++b) set_bits += (rows[static_cast<std::size_t>(r)] >> b) & 1;
  }
  // Keep glyphs dense enough to look like text and exercise inpainting.
  if (set_bits < 14) {
    rows[0] |= 0x1F;
    rows[6] |= 0x1F;
  }
  return rows;
}

struct Shapes {
  // Intensity assignment evaluated per pixel, before speckle.
  std::function<double(int, int, double)> intensity;
  // Structure predicates for ground-truth masks.
  std::vector<std::pair<std::string, std::function<bool(int, int)>>> structures;
};

struct HeartLayout {
  double radius_px = 0.0;
  // Per-chamber scale factors (video oscillation / CHD perturbation).
  std::array<double, 4> chamber_scale{1.0, 1.0, 1.0, 1.0};
};

Shapes heart_shapes(double cx, double cy, const HeartLayout& layout) {
  Shapes s;
  double R = layout.radius_px;
  Frame2 disc(cx, cy, 30.0);
  static const char* names[4] = {"chamber_lv", "chamber_rv", "chamber_la", "chamber_ra"};
  // Chamber centers sit in the four quadrants of the rotated disc frame.
  static const double qx[4] = {-0.42, 0.42, -0.42, 0.42};
  static const double qy[4] = {-0.40, -0.40, 0.42, 0.42};

  auto chamber_q = [=](int k, int r, int c) {
    double scale = layout.chamber_scale[static_cast<std::size_t>(k)];
    auto [u, v] = disc.local(c, r);
    double du = u - qx[k] * R, dv = v - qy[k] * R;
    double a = 0.34 * R * scale, b = 0.27 * R * scale;
    return std::sqrt((du / a) * (du / a) + (dv / b) * (dv / b));
  };

  s.intensity = [=](int r, int c, double base) {
    double q = ellipse_q(disc, c, r, R, 0.92 * R);
    double v = base;
    if (q <= 1.05) v = 0.88;  // myocardium disc
    for (int k = 0; k < 4; ++k)
      if (chamber_q(k, r, c) <= 1.0) v = 0.20;
    return v;
  };
  for (int k = 0; k < 4; ++k)
    s.structures.emplace_back(names[k],
                              [=](int r, int c) { return chamber_q(k, r, c) <= 1.0; });
  return s;
}

Shapes build_shapes(const PhantomSpec& spec, double& head_a_px, double& head_circ_mm,
                    const HeartLayout* heart_override) {
  const double hc_mm = reference_curves().at(50.0).hc_at(spec.ga_days);
  const double spacing = spec.pixel_spacing_mm;
  Shapes s;
  head_a_px = 0.0;
  head_circ_mm = 0.0;

  switch (spec.view_class) {
    case ViewClass::brain: {
      double a = hc_mm / (spacing * kPi * head_circ_factor());
      double b = kHeadAspect * a;
      head_a_px = a;
      head_circ_mm = hc_mm;
      Frame2 f(kBodyX, kBodyY, 15.0);
      BrainSubview sub = spec.brain_subview;
      s.intensity = [=](int r, int c, double base) {
        double q = ellipse_q(f, c, r, a, b);
        if (q > 1.1) return base;
        if (q >= 0.9) return 0.95;  // skull ring
        double v = 0.33;
        auto [u, w] = f.local(c, r);
        if (std::abs(w) <= 1.6 && std::abs(u) <= 0.85 * a) v = 0.62;  // midline echo
        if (sub == BrainSubview::transcerebellum) {
          for (double su : {-0.22, 0.22}) {
            double du = u - su * a, dw = w - 0.45 * b;
            if (std::hypot(du / (0.16 * a), dw / (0.14 * b)) <= 1.0) v = 0.78;
          }
        } else if (sub == BrainSubview::transthalamic) {
          for (double su : {-0.18, 0.18}) {
            double du = u - su * a, dw = w;
            if (std::hypot(du / (0.15 * a), dw / (0.22 * b)) <= 1.0) v = 0.72;
          }
        } else if (sub == BrainSubview::transventricular) {
          if (std::abs(w + 0.38 * b) <= 2.5 && std::abs(u) <= 0.55 * a) v = 0.86;
        }
        return v;
      };
      s.structures.emplace_back(
          "head", [=](int r, int c) { return ellipse_q(f, c, r, a, b) <= 1.1; });
      break;
    }
    case ViewClass::abdomen: {
      double R = 0.95 * hc_mm / (spacing * 2.0 * kPi);
      Frame2 f(kBodyX, kBodyY, 0.0);
      Frame2 stomach(kBodyX - 0.35 * R, kBodyY - 0.15 * R, -20.0);
      double spine_y = kBodyY + 0.72 * R;
      auto spine_hit = [=](int r, int c) {
        for (double off : {-0.16 * R, 0.0, 0.16 * R})
          if (std::hypot(c - (kBodyX + off), r - spine_y) <= 0.085 * R) return true;
        return false;
      };
      s.intensity = [=](int r, int c, double base) {
        double q = ellipse_q(f, c, r, R, R);
        double v = base;
        if (q <= 1.08) v = (q >= 0.92) ? 0.82 : 0.50;
        if (ellipse_q(stomach, c, r, 0.32 * R, 0.22 * R) <= 1.0) v = 0.16;
        if (spine_hit(r, c)) v = 0.94;
        return v;
      };
      s.structures.emplace_back(
          "abdomen", [=](int r, int c) { return ellipse_q(f, c, r, R, R) <= 1.08; });
      s.structures.emplace_back("stomach", [=](int r, int c) {
        return ellipse_q(stomach, c, r, 0.32 * R, 0.22 * R) <= 1.0;
      });
      s.structures.emplace_back("spine", spine_hit);
      break;
    }
    case ViewClass::femur: {
      double len = 0.22 * hc_mm / spacing;
      double ang = -12.0 * kPi / 180.0;
      double hx = 0.5 * len * std::cos(ang), hy = 0.5 * len * std::sin(ang);
      double x0 = kBodyX - hx, y0 = kBodyY - hy, x1 = kBodyX + hx, y1 = kBodyY + hy;
      auto bar_hit = [=](int r, int c) {
        return dist_to_segment(c, r, x0, y0, x1, y1) <= 3.5;
      };
      s.intensity = [=](int r, int c, double base) { return bar_hit(r, c) ? 0.96 : base; };
      s.structures.emplace_back("femur", bar_hit);
      break;
    }
    case ViewClass::heart: {
      HeartLayout layout;
      layout.radius_px = 0.105 * hc_mm / spacing;
      if (heart_override) layout = *heart_override;
      s = heart_shapes(kBodyX, kBodyY, layout);
      break;
    }
    case ViewClass::cervix: {
      double scale = 0.8 + 0.2 * (spec.ga_days - kGaMinDays) / 182.0;
      double apex_y = kBodyY - 34.0 * scale, base_y = kBodyY + 56.0 * scale;
      double half_w = 46.0 * scale;
      auto wedge_hit = [=](int r, int c) {
        if (r < apex_y || r > base_y) return false;
        double t = (r - apex_y) / (base_y - apex_y);
        return std::abs(c - kBodyX) <= t * half_w;
      };
      s.intensity = [=](int r, int c, double base) {
        double v = base;
        if (wedge_hit(r, c)) v = 0.72;
        if (std::abs(c - kBodyX) <= 1.8 && r >= apex_y + 6 && r <= base_y - 6) v = 0.24;
        return v;
      };
      s.structures.emplace_back("cervix", wedge_hit);
      break;
    }
    case ViewClass::other: {
      // Distractor class: a few soft blobs whose placement depends on the seed.
      Rng rng(derive_seed(spec.noise_seed, {0x07e4}));
      struct Blob { double x, y, rad; };
      std::vector<Blob> blobs;
      for (int i = 0; i < 3; ++i)
        blobs.push_back({kBodyX + rng.uniform(-48, 48), kBodyY + rng.uniform(-40, 48),
                         rng.uniform(10, 22)});
      s.intensity = [blobs](int r, int c, double base) {
        double v = base;
        for (const auto& blob : blobs)
          if (std::hypot(c - blob.x, r - blob.y) <= blob.rad) v = 0.62;
        return v;
      };
      break;
    }
  }
  return s;
}

void burn_annotation(RgbImage& rgb, Mask& annotation_mask, const std::string& text) {
  std::uint64_t h = fnv1a64(text.data(), text.size());
  float col[3];
  if (h & 1) {
    col[0] = 1.0f; col[1] = 0.92f; col[2] = 0.08f;  // saturated yellow
  } else {
    col[0] = 0.15f; col[1] = 0.95f; col[2] = 0.25f;  // saturated green
  }
  int x = 12, y = 20;
  const int cell = 2;  // glyph pixel scale
  for (char ch : text) {
    if (ch == ' ') {
      x += 6 * cell;
      continue;
    }
    auto rows = glyph_rows(ch);
    for (int gr = 0; gr < 7; ++gr)
      for (int gc = 0; gc < 5; ++gc) {
        if (!((rows[static_cast<std::size_t>(gr)] >> (4 - gc)) & 1)) continue;
        for (int dr = 0; dr < cell; ++dr)
          for (int dc = 0; dc < cell; ++dc) {
            int rr = y + gr * cell + dr, cc = x + gc * cell + dc;
            if (rr < 0 || rr >= rgb.h || cc < 0 || cc >= rgb.w) continue;
            for (int chn = 0; chn < 3; ++chn) rgb.at(rr, cc, chn) = col[chn];
            annotation_mask.at(rr, cc) = 1;
          }
      }
    x += 6 * cell;
  }
}

PhantomImage render(const PhantomSpec& spec, const HeartLayout* heart_override,
                    std::uint64_t speckle_seed) {
  spec.validate();
  PhantomImage out;
  out.spec = spec;
  out.pixels = GrayImage(kCanvas, kCanvas, 0.0f);
  out.fan_mask = Mask(kCanvas, kCanvas);
  out.annotation_mask = Mask(kCanvas, kCanvas);

  Shapes shapes = build_shapes(spec, out.head_semi_major_px, out.head_circumference_mm,
                               heart_override);

  Rng speckle(speckle_seed);
  for (int r = 0; r < kCanvas; ++r)
    for (int c = 0; c < kCanvas; ++c) {
      if (!in_fan(r, c)) continue;
      out.fan_mask.at(r, c) = 1;
      double rad = std::hypot(c - kApexX, r - kApexY);
      double base = 0.42 + 0.10 * (1.0 - rad / kFanRadiusMax);
      double v = shapes.intensity(r, c, base);
      v *= speckle.uniform(0.9, 1.1);
      out.pixels.at(r, c) = static_cast<float>(std::clamp(v, 0.02, 1.0));
    }

  for (auto& [name, hit] : shapes.structures) {
    Mask m(kCanvas, kCanvas);
    for (int r = 0; r < kCanvas; ++r)
      for (int c = 0; c < kCanvas; ++c)
        if (out.fan_mask.at(r, c) && hit(r, c)) m.at(r, c) = 1;
    out.structures.emplace_back(name, std::move(m));
  }

  out.rgb = to_rgb(out.pixels);
  if (spec.annotation_text && !spec.annotation_text->empty()) {
    burn_annotation(out.rgb, out.annotation_mask, *spec.annotation_text);
    out.pixels = to_gray(out.rgb);
  }
  return out;
}

}  // namespace

std::string to_string(ViewClass v) {
  switch (v) {
    case ViewClass::abdomen: return "abdomen";
    case ViewClass::brain: return "brain";
    case ViewClass::femur: return "femur";
    case ViewClass::heart: return "heart";
    case ViewClass::cervix: return "cervix";
    case ViewClass::other: return "other";
  }
  return "other";
}

std::string to_string(BrainSubview v) {
  switch (v) {
    case BrainSubview::none: return "none";
    case BrainSubview::transcerebellum: return "transcerebellum";
    case BrainSubview::transthalamic: return "transthalamic";
    case BrainSubview::transventricular: return "transventricular";
  }
  return "none";
}

ViewClass view_from_string(const std::string& s) {
  for (auto v : {ViewClass::abdomen, ViewClass::brain, ViewClass::femur, ViewClass::heart,
                 ViewClass::cervix, ViewClass::other})
    if (to_string(v) == s) return v;
  throw DomainError("unknown view class: " + s);
}

BrainSubview subview_from_string(const std::string& s) {
  for (auto v : {BrainSubview::none, BrainSubview::transcerebellum,
                 BrainSubview::transthalamic, BrainSubview::transventricular})
    if (to_string(v) == s) return v;
  throw DomainError("unknown brain subview: " + s);
}

void PhantomSpec::validate() const {
  if (ga_days < kGaMinDays || ga_days > kGaMaxDays)
    throw DomainError("ga_days out of [98, 280]: " + std::to_string(ga_days));
  if (!(pixel_spacing_mm > 0.0))
    throw DomainError("pixel_spacing_mm must be positive");
}

const Mask* PhantomImage::structure(const std::string& name) const {
  for (const auto& [n, m] : structures)
    if (n == name) return &m;
  return nullptr;
}

PhantomImage gen_image(const PhantomSpec& spec) {
  return render(spec, nullptr, spec.noise_seed);
}

std::vector<PhantomImage> gen_video(const PhantomSpec& spec, int n_frames, bool chd) {
  if (n_frames < 16 || n_frames > 128)
    throw DomainError("n_frames out of [16, 128]: " + std::to_string(n_frames));
  if (spec.view_class != ViewClass::heart)
    throw DomainError("gen_video requires a heart-view spec");
  spec.validate();

  const double hc_mm = reference_curves().at(50.0).hc_at(spec.ga_days);
  const double base_radius = 0.105 * hc_mm / spec.pixel_spacing_mm;
  const double beat_period = 8.0;  // frames per cardiac cycle

  std::vector<PhantomImage> frames;
  frames.reserve(static_cast<std::size_t>(n_frames));
  for (int t = 0; t < n_frames; ++t) {
    HeartLayout layout;
    layout.radius_px = base_radius;
    for (int k = 0; k < 4; ++k) {
      double phase = k * kPi / 2.0;
      layout.chamber_scale[static_cast<std::size_t>(k)] =
          1.0 + 0.16 * std::sin(2.0 * kPi * t / beat_period + phase);
    }
    if (chd) layout.chamber_scale[0] *= 0.55;  // hypoplastic chamber, every frame
    frames.push_back(render(spec, &layout,
                            derive_seed(spec.noise_seed, {0xF7A3E, static_cast<std::uint64_t>(t)})));
  }
  return frames;
}

std::vector<PhantomRecord> gen_dataset(int n_patients, int images_per_patient,
                                       const DatasetOptions& options, std::uint64_t seed) {
  if (n_patients < 1) throw DomainError("n_patients must be >= 1");
  if (images_per_patient < 1) throw DomainError("images_per_patient must be >= 1");
  if (options.class_mix.empty()) throw DomainError("class_mix must not be empty");

  double total_w = 0.0;
  for (const auto& [name, w] : options.class_mix) {
    view_from_string(name);  // validates names
    if (w < 0) throw DomainError("negative class weight for " + name);
    total_w += w;
  }
  if (total_w <= 0.0) throw DomainError("class_mix weights sum to zero");

  const int total = n_patients * images_per_patient;

  // Exact quotas via largest remainder so proportions track class_mix.
  std::vector<std::pair<std::string, double>> mix(options.class_mix.begin(),
                                                  options.class_mix.end());
  std::vector<int> quota(mix.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  int assigned = 0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    double exact = total * mix[i].second / total_w;
    quota[i] = static_cast<int>(std::floor(exact));
    assigned += quota[i];
    remainders.emplace_back(-(exact - quota[i]), i);
  }
  std::sort(remainders.begin(), remainders.end());
  for (int i = 0; i < total - assigned; ++i)
    quota[remainders[static_cast<std::size_t>(i)].second]++;

  std::vector<std::string> class_of;
  for (std::size_t i = 0; i < mix.size(); ++i)
    class_of.insert(class_of.end(), static_cast<std::size_t>(quota[i]), mix[i].first);
  Rng class_rng(derive_seed(seed, {1}));
  class_rng.shuffle(class_of);

  // Patient-wise train/test assignment.
  std::vector<int> patient_order(static_cast<std::size_t>(n_patients));
  for (int p = 0; p < n_patients; ++p) patient_order[static_cast<std::size_t>(p)] = p;
  Rng split_rng(derive_seed(seed, {3}));
  split_rng.shuffle(patient_order);
  std::size_t n_test = static_cast<std::size_t>(
      std::llround(options.test_fraction * static_cast<double>(n_patients)));
  std::vector<Split> patient_split(static_cast<std::size_t>(n_patients), Split::train);
  for (std::size_t i = 0; i < n_test; ++i)
    patient_split[static_cast<std::size_t>(patient_order[i])] = Split::test;

  std::vector<PhantomRecord> out;
  out.reserve(static_cast<std::size_t>(total));
  int image_index = 0;
  for (int p = 0; p < n_patients; ++p) {
    Rng patient_rng(derive_seed(seed, {2, static_cast<std::uint64_t>(p)}));
    int ga = static_cast<int>(std::llround(
        std::clamp(patient_rng.normal(148.0, 16.0), static_cast<double>(kGaMinDays),
                   static_cast<double>(kGaMaxDays))));
    char pid[16];
    std::snprintf(pid, sizeof(pid), "P%04d", p);

    for (int k = 0; k < images_per_patient; ++k, ++image_index) {
      Rng img_rng(derive_seed(seed, {4, static_cast<std::uint64_t>(image_index)}));
      PhantomRecord pr;
      PhantomSpec& sp = pr.spec;
      sp.view_class = view_from_string(class_of[static_cast<std::size_t>(image_index)]);
      sp.ga_days = ga;
      sp.noise_seed = derive_seed(seed, {5, static_cast<std::uint64_t>(image_index)});

      if (sp.view_class == ViewClass::brain) {
        sp.pixel_spacing_mm = options.brain_pixel_spacing;
        if (img_rng.uniform() < 0.5) {
          static const BrainSubview subs[3] = {BrainSubview::transcerebellum,
                                               BrainSubview::transthalamic,
                                               BrainSubview::transventricular};
          sp.brain_subview = subs[img_rng.uniform_index(3)];
        }
      } else if (sp.view_class == ViewClass::heart) {
        sp.pixel_spacing_mm = options.brain_pixel_spacing;
      } else {
        sp.pixel_spacing_mm = 0.5 + 0.05 * static_cast<double>(img_rng.uniform_index(9));
      }

      if (options.annotate_fraction > 0 && img_rng.uniform() < options.annotate_fraction) {
        static const std::map<ViewClass, std::string> texts{
            {ViewClass::abdomen, "AC"}, {ViewClass::brain, "HC"}, {ViewClass::femur, "FL"},
            {ViewClass::heart, "4CH"},  {ViewClass::cervix, "CX"}, {ViewClass::other, "IMG"}};
        sp.annotation_text = texts.at(sp.view_class);
      }

      ImageRecord& rec = pr.record;
      char iid[16];
      std::snprintf(iid, sizeof(iid), "IMG%05d", image_index);
      rec.image_id = iid;
      rec.patient_id = pid;
      rec.image_path = std::string("images/") + iid + ".png";
      rec.labels.push_back(to_string(sp.view_class));
      if (sp.brain_subview != BrainSubview::none)
        rec.labels.push_back(to_string(sp.brain_subview));
      std::sort(rec.labels.begin(), rec.labels.end());
      rec.ga_days = ga;
      rec.pixel_spacing_mm = sp.pixel_spacing_mm;
      rec.subgroup = Subgroup::standard_view;
      rec.split = patient_split[static_cast<std::size_t>(p)];
      out.push_back(std::move(pr));
    }
  }
  return out;
}

std::vector<PhantomVideoRecord> gen_video_dataset(int n_videos,
                                                  const VideoDatasetOptions& options,
                                                  std::uint64_t seed) {
  if (n_videos < 1) throw DomainError("n_videos must be >= 1");
  if (options.min_frames < 16 || options.max_frames > 128 ||
      options.min_frames > options.max_frames)
    throw DomainError("video frame range must lie within [16, 128]");

  // Exact CHD quota over a shuffled order.
  std::vector<int> order(static_cast<std::size_t>(n_videos));
  for (int i = 0; i < n_videos; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng chd_rng(derive_seed(seed, {11}));
  chd_rng.shuffle(order);
  std::size_t n_chd = static_cast<std::size_t>(
      std::llround(options.chd_fraction * static_cast<double>(n_videos)));
  std::vector<bool> is_chd(static_cast<std::size_t>(n_videos), false);
  for (std::size_t i = 0; i < n_chd; ++i) is_chd[static_cast<std::size_t>(order[i])] = true;

  Rng split_rng(derive_seed(seed, {12}));
  auto split_order = order;
  split_rng.shuffle(split_order);
  std::size_t n_test = static_cast<std::size_t>(
      std::llround(options.test_fraction * static_cast<double>(n_videos)));
  std::vector<Split> split(static_cast<std::size_t>(n_videos), Split::train);
  for (std::size_t i = 0; i < n_test; ++i)
    split[static_cast<std::size_t>(split_order[i])] = Split::test;

  std::vector<PhantomVideoRecord> out;
  for (int i = 0; i < n_videos; ++i) {
    Rng rng(derive_seed(seed, {13, static_cast<std::uint64_t>(i)}));
    PhantomVideoRecord pv;
    pv.spec.view_class = ViewClass::heart;
    pv.spec.ga_days = static_cast<int>(std::llround(
        std::clamp(rng.normal(148.0, 16.0), static_cast<double>(kGaMinDays),
                   static_cast<double>(kGaMaxDays))));
    pv.spec.pixel_spacing_mm = 0.7;
    pv.spec.noise_seed = derive_seed(seed, {14, static_cast<std::uint64_t>(i)});

    char vid[16], pid[16];
    std::snprintf(vid, sizeof(vid), "VID%04d", i);
    std::snprintf(pid, sizeof(pid), "VP%04d", i);
    VideoRecord& rec = pv.record;
    rec.video_id = vid;
    rec.patient_id = pid;
    rec.frames_dir = std::string("videos/") + vid;
    rec.n_frames = options.min_frames +
                   static_cast<int>(rng.uniform_index(
                       static_cast<std::uint64_t>(options.max_frames - options.min_frames + 1)));
    rec.chd = is_chd[static_cast<std::size_t>(i)];
    rec.ga_days = pv.spec.ga_days;
    rec.pixel_spacing_mm = pv.spec.pixel_spacing_mm;
    rec.split = split[static_cast<std::size_t>(i)];
    out.push_back(std::move(pv));
  }
  return out;
}

void materialize_dataset(const std::vector<PhantomRecord>& records,
                         const std::filesystem::path& out_dir, bool write_structure_masks) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "images");
  if (write_structure_masks) fs::create_directories(out_dir / "masks");

  std::vector<ImageRecord> manifest;
  manifest.reserve(records.size());
  for (const auto& pr : records) {
    PhantomImage img = gen_image(pr.spec);
    ImageRecord rec = pr.record;
    if (pr.spec.annotation_text)
      write_png(out_dir / rec.image_path, img.rgb);
    else
      write_png(out_dir / rec.image_path, img.pixels);
    if (write_structure_masks) {
      for (const auto& [name, mask] : img.structures) {
        std::string rel = "masks/" + rec.image_id + "_" + name + ".png";
        write_png(out_dir / rel, mask);
        rec.mask_paths[name] = rel;
      }
    }
    manifest.push_back(std::move(rec));
  }
  write_manifest(out_dir / "manifest.jsonl", manifest);
}

void materialize_video_dataset(const std::vector<PhantomVideoRecord>& records,
                               const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  std::vector<VideoRecord> manifest;
  for (const auto& pv : records) {
    fs::create_directories(out_dir / pv.record.frames_dir);
    auto frames = gen_video(pv.spec, pv.record.n_frames, pv.record.chd);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      char name[32];
      std::snprintf(name, sizeof(name), "frame_%04d.png", static_cast<int>(t));
      write_png(out_dir / pv.record.frames_dir / name, frames[t].pixels);
    }
    manifest.push_back(pv.record);
  }
  write_video_manifest(out_dir / "videos.jsonl", manifest);
}

}  // namespace fetalus::phantom
