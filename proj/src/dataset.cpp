#include "advface/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "advface/errors.hpp"
#include "advface/image_io.hpp"
#include "advface/rng.hpp"

namespace advface {

namespace fs = std::filesystem;

std::vector<PairRecord> load_pairs(const fs::path& path, std::vector<std::string>* warnings) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read pair file " + path.string());
  const fs::path base = path.parent_path();
  std::vector<PairRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string a, b, label, extra;
    if (!(ls >> a) || a.front() == '#') continue;
    if (!(ls >> b >> label)) throw ParseError(path.string(), lineno, "expected '<path_a> <path_b> <0|1>'");
    if (ls >> extra) throw ParseError(path.string(), lineno, "unexpected trailing token '" + extra + "'");
    if (label != "0" && label != "1") throw ParseError(path.string(), lineno, "label must be 0 or 1, got '" + label + "'");
    auto resolve = [&](const std::string& p) { return fs::path(p).is_absolute() ? p : (base / p).string(); };
    out.push_back({resolve(a), resolve(b), label == "1"});
  }
  if (out.empty() && warnings) warnings->push_back("pair file " + path.string() + " contains no pairs");
  return out;
}

void save_pairs(const std::vector<PairRecord>& pairs, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write pair file " + path.string());
  for (const auto& p : pairs) os << p.image_a << ' ' << p.image_b << ' ' << (p.same_identity ? 1 : 0) << '\n';
  if (!os) throw IoError("write failed: " + path.string());
}

namespace {

// Whether the trailing components of `path` equal `key`.
bool ends_with_components(const fs::path& path, const fs::path& key) {
  auto p = path.end(), k = key.end();
  while (k != key.begin()) {
    if (p == path.begin()) return false;
    if (*--p != *--k) return false;
  }
  return true;
}

// Exact key first, then the longest key that is a trailing part of the path.
LandmarkTable::const_iterator find_landmarks(const LandmarkTable& table, const std::string& image) {
  auto it = table.find(image);
  if (it != table.end()) return it;
  const fs::path path = fs::path(image).lexically_normal();
  std::size_t best = 0;
  for (auto k = table.begin(); k != table.end(); ++k) {
    const fs::path key = fs::path(k->first).lexically_normal();
    const auto n = static_cast<std::size_t>(std::distance(key.begin(), key.end()));
    if (n > best && ends_with_components(path, key)) {
      best = n;
      it = k;
    }
  }
  return it;
}

}  // namespace

std::vector<FacePair> resolve_pairs(const std::vector<PairRecord>& records, const Shape& input_shape,
                                    const LandmarkTable* landmarks) {
  std::map<std::string, Tensor> cache;
  auto load = [&](const std::string& p) -> const Tensor& {
    auto it = cache.find(p);
    if (it == cache.end()) {
      Tensor t = read_image(p);
      if (t.shape() != input_shape)
        throw ShapeError("image " + p + " has shape " + shape_to_string(t.shape()) + ", model expects " +
                         shape_to_string(input_shape));
      it = cache.emplace(p, std::move(t)).first;
    }
    return it->second;
  };
  std::vector<FacePair> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    FacePair fp{load(r.image_a), load(r.image_b), r.same_identity, {}};
    if (landmarks) {
      auto it = find_landmarks(*landmarks, r.image_a);
      if (it != landmarks->end()) {
        it->second.check_bounds(input_shape[0], input_shape[1]);
        fp.landmarks = it->second;
      }
    }
    out.push_back(std::move(fp));
  }
  return out;
}

void SyntheticDatasetSpec::validate() const {
  if (identities < 2) throw ConfigError("synthetic data needs at least 2 identities");
  if (height < 16 || width < 16) throw ConfigError("synthetic images must be at least 16x16");
  if (channels != 1 && channels != 3) throw ConfigError("synthetic images have 1 or 3 channels");
  if (samples_per_identity < 2 || samples_per_identity % 2 != 0)
    throw ConfigError("samples per identity must be a positive even number");
  if (!(noise >= 0.0) || !(brightness >= 0.0)) throw ConfigError("noise levels must be >= 0");
  if (!(similarity >= 0.0 && similarity < 1.0)) throw ConfigError("similarity must be in [0, 1)");
  if (!(detail >= 0.0)) throw ConfigError("detail amplitude must be >= 0");
}

namespace {

struct Blob {
  double row, col, radius, amplitude;
};

// Geometry and shading of one identity, in fractions of the image size.
struct FaceTemplate {
  double background, skin;
  double face_rx, face_ry;
  double eye_row, eye_dx, eye_radius, eye_dark;
  double brow_gap, brow_dark;
  double nose_row, nose_col, nose_amp;
  double mouth_row, mouth_half, mouth_dark;
  std::vector<Blob> texture;
  std::vector<double> tint;
  Tensor fine;  // H/2 x W/2 field in [-1, 1], upsampled 2x when rendered
};

FaceTemplate make_template(const SyntheticDatasetSpec& spec, std::size_t identity) {
  Rng rng(derive_seed(spec.seed, 0x1d000000ULL + identity));
  const double s = spec.similarity;
  // Blend each identity parameter toward the shared mean face.
  auto p = [&](double lo, double hi) { return (1.0 - s) * rng.uniform(lo, hi) + s * 0.5 * (lo + hi); };
  FaceTemplate t;
  t.background = p(20.0, 70.0);
  t.skin = p(120.0, 200.0);
  t.face_rx = p(0.30, 0.38);
  t.face_ry = p(0.38, 0.46);
  t.eye_row = p(0.34, 0.42);
  t.eye_dx = p(0.14, 0.22);
  t.eye_radius = p(0.045, 0.075);
  t.eye_dark = p(60.0, 110.0);
  t.brow_gap = p(0.07, 0.11);
  t.brow_dark = p(30.0, 80.0);
  t.nose_row = p(0.52, 0.60);
  t.nose_col = p(0.46, 0.54);
  t.nose_amp = p(-40.0, 40.0);
  t.mouth_row = p(0.68, 0.76);
  t.mouth_half = p(0.09, 0.16);
  t.mouth_dark = p(40.0, 90.0);
  for (int i = 0; i < 3; ++i)
    t.texture.push_back({p(0.25, 0.75), p(0.25, 0.75), p(0.06, 0.14), (1.0 - s) * rng.uniform(-35.0, 35.0)});
  for (std::size_t c = 0; c < spec.channels; ++c) t.tint.push_back(spec.channels == 1 ? 1.0 : p(0.8, 1.2));
  t.fine = Tensor({(spec.height + 1) / 2, (spec.width + 1) / 2});
  for (auto& v : t.fine.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

double smooth_inside(double d) { return 1.0 / (1.0 + std::exp(8.0 * d)); }  // d < 0 inside

struct Rendered {
  Tensor image;
  LandmarkSet landmarks;
};

Rendered render(const FaceTemplate& t, const SyntheticDatasetSpec& spec, double dy, double dx, double bright,
                Rng& noise_rng) {
  const double H = static_cast<double>(spec.height), W = static_cast<double>(spec.width);
  const double cy = 0.5 * H + dy, cx = 0.5 * W + dx;
  const double ey = t.eye_row * H + dy;
  const double lx = cx - t.eye_dx * W, rx = cx + t.eye_dx * W;
  const double er = t.eye_radius * H;
  const double by = ey - t.brow_gap * H;
  const double ny = t.nose_row * H + dy, nx = t.nose_col * W + dx;
  const double my = t.mouth_row * H + dy, mh = t.mouth_half * W;

  Rendered out{Tensor({spec.height, spec.width, spec.channels}), {}};
  for (std::size_t r = 0; r < spec.height; ++r)
    for (std::size_t c = 0; c < spec.width; ++c) {
      const double y = static_cast<double>(r) + 0.5, x = static_cast<double>(c) + 0.5;
      const double fy = (y - cy) / (t.face_ry * H), fx = (x - cx) / (t.face_rx * W);
      const double face = smooth_inside((std::sqrt(fy * fy + fx * fx) - 1.0) * 4.0);
      double v = t.background + face * (t.skin - t.background);
      for (const Blob& b : t.texture) {
        const double ry = y - (b.row * H + dy), rx2 = x - (b.col * W + dx), rad = b.radius * H;
        v += face * b.amplitude * std::exp(-(ry * ry + rx2 * rx2) / (2.0 * rad * rad));
      }
      for (double ex : {lx, rx}) {
        const double d = std::hypot(y - ey, x - ex) / er - 1.0;
        v -= face * t.eye_dark * smooth_inside(d * 2.0);
        const double bd = std::max(std::abs(y - by) / 0.6 - 1.0, std::abs(x - ex) / (1.4 * er) - 1.0);
        v -= face * t.brow_dark * smooth_inside(bd * 2.0);
      }
      const double nd = ((y - ny) * (y - ny) + 4.0 * (x - nx) * (x - nx)) / (er * er);
      v += face * t.nose_amp * std::exp(-nd);
      const double md = std::max(std::abs(y - my) / 0.9 - 1.0, std::abs(x - cx) / mh - 1.0);
      v -= face * t.mouth_dark * smooth_inside(md * 2.0);
      if (spec.detail > 0.0) {
        // The fine texture moves with the face.
        const long fr = std::clamp(static_cast<long>(std::floor((y - dy) / 2.0)), 0L, static_cast<long>(t.fine.dim(0)) - 1);
        const long fc = std::clamp(static_cast<long>(std::floor((x - dx) / 2.0)), 0L, static_cast<long>(t.fine.dim(1)) - 1);
        v += face * spec.detail * t.fine[static_cast<std::size_t>(fr) * t.fine.dim(1) + static_cast<std::size_t>(fc)];
      }
      for (std::size_t ch = 0; ch < spec.channels; ++ch) {
        const double px = v * t.tint[ch] + bright + spec.noise * noise_rng.normal();
        out.image.at(r, c, ch) = std::clamp(std::round(px), 0.0, 255.0);
      }
    }
  auto pt = [&](double y, double x) {
    return Point{static_cast<int>(std::clamp(std::floor(y), 0.0, H - 1.0)),
                 static_cast<int>(std::clamp(std::floor(x), 0.0, W - 1.0))};
  };
  out.landmarks.points = {pt(ey, lx), pt(ey, rx),         pt(by, lx),      pt(by, rx),
                          pt(ny, nx), pt(my, cx - mh),    pt(my, cx + mh), pt(my, cx),
                          pt(cy + t.face_ry * H * 0.85, cx)};
  return out;
}

SyntheticImage sample(const FaceTemplate& t, const SyntheticDatasetSpec& spec, std::size_t identity,
                      std::string name, std::uint64_t stream) {
  Rng rng(derive_seed(spec.seed, stream));
  const auto shift = [&] {
    const auto span = 2 * spec.max_shift + 1;
    return static_cast<double>(rng.below(span)) - static_cast<double>(spec.max_shift);
  };
  const double dy = shift(), dx = shift();
  const double bright = rng.uniform(-spec.brightness, spec.brightness);
  Rendered r = render(t, spec, dy, dx, bright, rng);
  return {std::move(name), std::move(r.image), identity, std::move(r.landmarks)};
}

std::string image_name(std::size_t identity, const char* kind, std::size_t index) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "id%03zu_%s%02zu", identity, kind, index);
  return buf;
}

}  // namespace

SyntheticDataset make_synthetic(const SyntheticDatasetSpec& spec) {
  spec.validate();
  SyntheticDataset data;
  data.identities = spec.identities;
  const std::size_t n = spec.samples_per_identity;
  for (std::size_t k = 0; k < spec.identities; ++k) {
    const FaceTemplate t = make_template(spec, k);
    for (std::size_t s = 0; s < n; ++s)
      data.eval.push_back(sample(t, spec, k, image_name(k, "s", s), (k << 20) + s));
    for (std::size_t s = 0; s < spec.train_per_identity; ++s)
      data.train.push_back(sample(t, spec, k, image_name(k, "t", s), (k << 20) + (1 << 19) + s));
  }
  Rng pair_rng(derive_seed(spec.seed, 0x9a125ULL));
  for (std::size_t k = 0; k < spec.identities; ++k)
    for (std::size_t j = 0; j + 1 < n; j += 2) {
      data.pairs.push_back({data.eval[k * n + j].name, data.eval[k * n + j + 1].name, true});
      const std::size_t other = (k + 1 + pair_rng.below(spec.identities - 1)) % spec.identities;
      data.pairs.push_back({data.eval[k * n + j].name, data.eval[other * n + j + 1].name, false});
    }
  return data;
}

LabeledDataset SyntheticDataset::training_set() const {
  LabeledDataset d;
  d.num_classes = identities;
  for (const auto& s : train) {
    d.images.push_back(s.image);
    d.labels.push_back(s.identity);
  }
  return d;
}

std::vector<FacePair> SyntheticDataset::face_pairs() const {
  std::map<std::string, const SyntheticImage*> by_name;
  for (const auto& s : eval) by_name[s.name] = &s;
  std::vector<FacePair> out;
  for (const auto& p : pairs) {
    const SyntheticImage& a = *by_name.at(p.image_a);
    out.push_back({a.image, by_name.at(p.image_b)->image, p.same_identity, a.landmarks});
  }
  return out;
}

void write_synthetic(const SyntheticDataset& data, const fs::path& dir) {
  fs::create_directories(dir / "images");
  LandmarkTable table;
  std::ofstream labels(dir / "labels.txt");
  if (!labels) throw IoError("cannot write " + (dir / "labels.txt").string());
  for (const auto& s : data.eval) {
    const std::string rel = "images/" + s.name + ".tensor";
    write_tensor(s.image, dir / rel);
    table[rel] = s.landmarks;
    labels << rel << ' ' << s.identity << '\n';
  }
  if (!data.train.empty()) fs::create_directories(dir / "train");
  for (const auto& s : data.train) {
    const std::string rel = "train/" + s.name + ".tensor";
    write_tensor(s.image, dir / rel);
    labels << rel << ' ' << s.identity << '\n';
  }
  if (!labels) throw IoError("write failed: " + (dir / "labels.txt").string());
  std::vector<PairRecord> pairs = data.pairs;
  for (auto& p : pairs) {
    p.image_a = "images/" + p.image_a + ".tensor";
    p.image_b = "images/" + p.image_b + ".tensor";
  }
  save_pairs(pairs, dir / "pairs.txt");
  save_landmarks(table, dir / "landmarks.txt");
}

LabeledDataset load_labeled(const fs::path& labels_path, const std::string& prefix) {
  std::ifstream is(labels_path);
  if (!is) throw IoError("cannot read label file " + labels_path.string());
  LabeledDataset d;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string p;
    long long label = -1;
    if (!(ls >> p) || p.front() == '#') continue;
    if (!(ls >> label) || label < 0) throw ParseError(labels_path.string(), lineno, "expected '<path> <identity>'");
    if (!prefix.empty() && p.rfind(prefix, 0) != 0) continue;
    d.images.push_back(read_image(labels_path.parent_path() / p));
    d.labels.push_back(static_cast<std::size_t>(label));
    d.num_classes = std::max(d.num_classes, static_cast<std::size_t>(label) + 1);
  }
  return d;
}

}  // namespace advface
