// SPDX-License-Identifier: Apache-2.0
#include "radarmesh/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

#include "radarmesh/rng.hpp"

namespace radarmesh {

namespace fs = std::filesystem;
using nlohmann::json;

DatasetProfile DatasetProfile::by_name(const std::string& name) {
  DatasetProfile p;
  p.name = name;
  if (name == "default") {
    p.scene.grid = GridSpec{};
    p.scene.roi_dims = {32, 32, 24};
    p.scene.teacher_points = 512;
    p.n_train = 2000;
    p.n_val = 200;
    p.n_test = 400;
    return p;
  }
  GridSpec half;
  half.dims = {61, 56, 16};
  half.voxel_size = Vec3(0.2, 0.2, 0.2);
  p.scene.grid = half;
  p.scene.roi_dims = {16, 16, 12};
  p.scene.teacher_points = 128;
  if (name == "tiny") {
    p.n_train = 200;
    p.n_val = 20;
    p.n_test = 40;
    return p;
  }
  if (name == "bench") {
    p.n_train = 120;
    p.n_val = 20;
    p.n_test = 40;
    return p;
  }
  throw ConfigError("unknown dataset profile '" + name + "'");
}

int DatasetProfile::count(const std::string& split) const {
  if (split == "train") return n_train;
  if (split == "val") return n_val;
  if (split == "test") return n_test;
  throw ConfigError("unknown split '" + split + "'");
}

std::vector<Subject> make_subjects(int n, std::uint64_t seed) {
  std::mt19937_64 rng(mix_seed(seed, 0x50b1));
  std::normal_distribution<double> g(0.0, 0.8);
  std::vector<Subject> out(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    for (int k = 0; k < kNumBetas; ++k) out[s].beta[k] = std::clamp(g(rng), -2.0, 2.0);
    out[s].gender = s % 2 == 0 ? 1.0 : 0.0;
  }
  return out;
}

json grid_to_json(const GridSpec& g) {
  return {{"dims", g.dims},
          {"origin", {g.origin.x(), g.origin.y(), g.origin.z()}},
          {"voxel_size", {g.voxel_size.x(), g.voxel_size.y(), g.voxel_size.z()}}};
}

GridSpec grid_from_json(const json& j) {
  GridSpec g;
  g.dims = j.at("dims").get<Index3>();
  const auto o = j.at("origin").get<std::array<double, 3>>();
  const auto v = j.at("voxel_size").get<std::array<double, 3>>();
  g.origin = Vec3(o[0], o[1], o[2]);
  g.voxel_size = Vec3(v[0], v[1], v[2]);
  if (!g.valid()) throw ConfigError("invalid grid in JSON");
  return g;
}

json scene_to_json(const SceneConfig& s) {
  const ClutterConfig& c = s.clutter;
  return {{"grid", grid_to_json(s.grid)},
          {"sensor_pos", {s.sensor_pos.x(), s.sensor_pos.y(), s.sensor_pos.z()}},
          {"frame_rate", s.frame_rate},
          {"window", s.window},
          {"roi_dims", s.roi_dims},
          {"teacher_points", s.teacher_points},
          {"clutter",
           {{"i0", c.i0},
            {"speckle_sigma", c.speckle_sigma},
            {"wall", c.wall},
            {"wall_offset", c.wall_offset},
            {"wall_strength", c.wall_strength},
            {"static_reflectors", c.static_reflectors},
            {"reflector_strength", c.reflector_strength},
            {"ghosts", c.ghosts},
            {"ghost_spacing", c.ghost_spacing},
            {"ghost_attenuation", c.ghost_attenuation},
            {"noise_sigma", c.noise_sigma},
            {"normalize", c.normalize}}}};
}

SceneConfig scene_from_json(const json& j) {
  SceneConfig s;
  s.grid = grid_from_json(j.at("grid"));
  const auto sp = j.at("sensor_pos").get<std::array<double, 3>>();
  s.sensor_pos = Vec3(sp[0], sp[1], sp[2]);
  s.frame_rate = j.value("frame_rate", 10.0);
  s.window = j.value("window", kDefaultWindow);
  s.roi_dims = j.at("roi_dims").get<Index3>();
  s.teacher_points = j.value("teacher_points", 512);
  if (j.contains("clutter")) {
    const json& c = j.at("clutter");
    ClutterConfig& k = s.clutter;
    k.i0 = c.value("i0", k.i0);
    k.speckle_sigma = c.value("speckle_sigma", k.speckle_sigma);
    k.wall = c.value("wall", k.wall);
    k.wall_offset = c.value("wall_offset", k.wall_offset);
    k.wall_strength = c.value("wall_strength", k.wall_strength);
    k.static_reflectors = c.value("static_reflectors", k.static_reflectors);
    k.reflector_strength = c.value("reflector_strength", k.reflector_strength);
    k.ghosts = c.value("ghosts", k.ghosts);
    k.ghost_spacing = c.value("ghost_spacing", k.ghost_spacing);
    k.ghost_attenuation = c.value("ghost_attenuation", k.ghost_attenuation);
    k.noise_sigma = c.value("noise_sigma", k.noise_sigma);
    k.normalize = c.value("normalize", k.normalize);
  }
  if (s.window < 2) throw ConfigError("window must be at least 2");
  return s;
}

ArrayContainer sequence_to_container(const LabeledSequence& seq) {
  ArrayContainer c;
  const int t = seq.window();
  const Index3 d = seq.grid.dims;
  const auto nvox = static_cast<std::int64_t>(seq.grid.num_voxels());
  std::vector<float> frames;
  frames.reserve(static_cast<std::size_t>(t * nvox));
  std::vector<std::uint8_t> occ;
  occ.reserve(static_cast<std::size_t>(t * nvox));
  for (int i = 0; i < t; ++i) {
    frames.insert(frames.end(), seq.frames[i].data.begin(), seq.frames[i].data.end());
    occ.insert(occ.end(), seq.occupancy[i].values.data.begin(), seq.occupancy[i].values.data.end());
  }
  c.put("frames", {t, d[0], d[1], d[2]}, frames);
  c.put("occupancy", {t, d[0], d[1], d[2]}, occ);
  std::vector<double> params;
  for (const auto& p : seq.params) {
    const auto v = p.to_vector();
    params.insert(params.end(), v.begin(), v.end());
  }
  c.put("params", {t, kNumContinuousParams + 1}, params);
  std::vector<double> centers;
  for (const auto& v : seq.gt_center) centers.insert(centers.end(), {v.x(), v.y(), v.z()});
  c.put("gt_center", {t, 3}, centers);
  c.put("gt_roi_origin", {3},
        std::vector<std::int32_t>{seq.gt_roi_origin[0], seq.gt_roi_origin[1], seq.gt_roi_origin[2]});
  const Index3 rd = seq.flow_gt.grid.dims;
  std::vector<float> flow;
  for (const auto& ch : seq.flow_gt.values) flow.insert(flow.end(), ch.data.begin(), ch.data.end());
  c.put("flow_gt", {3, rd[0], rd[1], rd[2]}, flow);
  const auto nt = seq.teacher_points.empty() ? 0 : seq.teacher_points[0].rows();
  std::vector<float> tp;
  for (const auto& p : seq.teacher_points) {
    for (Eigen::Index r = 0; r < p.rows(); ++r)
      for (int a = 0; a < 3; ++a) tp.push_back(static_cast<float>(p(r, a)));
  }
  c.put("teacher_points", {t, nt, 3}, tp);
  c.meta = {{"action", seq.action},
            {"seed", seq.seed},
            {"grid", grid_to_json(seq.grid)},
            {"roi_grid", grid_to_json(seq.flow_gt.grid)},
            {"sensor_pos", {seq.sensor_pos.x(), seq.sensor_pos.y(), seq.sensor_pos.z()}},
            {"frame_rate", seq.frame_rate}};
  return c;
}

LabeledSequence sequence_from_container(const ArrayContainer& c, const BodyModel& body) {
  LabeledSequence seq;
  seq.action = c.meta.at("action").get<std::string>();
  seq.seed = c.meta.at("seed").get<std::uint64_t>();
  seq.grid = grid_from_json(c.meta.at("grid"));
  const auto sp = c.meta.at("sensor_pos").get<std::array<double, 3>>();
  seq.sensor_pos = Vec3(sp[0], sp[1], sp[2]);
  seq.frame_rate = c.meta.value("frame_rate", 10.0);
  const auto& fe = c.at("frames");
  if (fe.shape.size() != 4 || fe.shape[1] != seq.grid.dims[0] || fe.shape[2] != seq.grid.dims[1] ||
      fe.shape[3] != seq.grid.dims[2]) {
    throw IoError("frame shape does not match the recorded grid");
  }
  const int t = static_cast<int>(fe.shape[0]);
  const auto nvox = seq.grid.num_voxels();
  const auto frames = c.get<float>("frames");
  const auto occ = c.get<std::uint8_t>("occupancy");
  if (occ.size() != frames.size()) throw IoError("occupancy shape does not match frames");
  for (int i = 0; i < t; ++i) {
    FloatVolume f(seq.grid.dims);
    std::copy_n(frames.begin() + static_cast<std::ptrdiff_t>(i * nvox), nvox, f.data.begin());
    seq.frames.push_back(std::move(f));
    OccupancyMap m{seq.grid, Volume<std::uint8_t>(seq.grid.dims)};
    std::copy_n(occ.begin() + static_cast<std::ptrdiff_t>(i * nvox), nvox, m.values.data.begin());
    seq.occupancy.push_back(std::move(m));
  }
  const auto params = c.get<double>("params");
  const std::size_t stride = kNumContinuousParams + 1;
  if (params.size() != stride * t) throw IoError("params shape does not match the window");
  for (int i = 0; i < t; ++i) {
    std::vector<double> v(params.begin() + static_cast<std::ptrdiff_t>(i * stride),
                          params.begin() + static_cast<std::ptrdiff_t>((i + 1) * stride));
    seq.params.push_back(BodyParams::from_vector(v));
    seq.meshes.push_back(forward(body.select(seq.params.back().g), seq.params.back()));
  }
  const auto centers = c.get<double>("gt_center");
  for (int i = 0; i < t; ++i) seq.gt_center.emplace_back(centers[3 * i], centers[3 * i + 1], centers[3 * i + 2]);
  const auto ro = c.get<std::int32_t>("gt_roi_origin");
  seq.gt_roi_origin = {ro.at(0), ro.at(1), ro.at(2)};
  seq.flow_gt.grid = grid_from_json(c.meta.at("roi_grid"));
  const auto flow = c.get<float>("flow_gt");
  const auto rn = seq.flow_gt.grid.num_voxels();
  if (flow.size() != 3 * rn) throw IoError("flow shape does not match the RoI grid");
  for (int a = 0; a < 3; ++a) {
    seq.flow_gt.values[a] = FloatVolume(seq.flow_gt.grid.dims);
    std::copy_n(flow.begin() + static_cast<std::ptrdiff_t>(a * rn), rn, seq.flow_gt.values[a].data.begin());
  }
  const auto& te = c.at("teacher_points");
  const auto tp = c.get<float>("teacher_points");
  const auto nt = te.shape.at(1);
  for (int i = 0; i < t; ++i) {
    Points p(nt, 3);
    for (std::int64_t r = 0; r < nt; ++r)
      for (int a = 0; a < 3; ++a) p(r, a) = tp[static_cast<std::size_t>((i * nt + r) * 3 + a)];
    seq.teacher_points.push_back(std::move(p));
  }
  return seq;
}

std::string hash_split_files(const fs::path& dir, const std::vector<std::string>& files) {
  std::uint64_t h = fnv1a("");
  for (const auto& f : files) {
    h = fnv1a(f, h);
    std::ifstream in(dir / f, std::ios::binary);
    if (!in) throw IoError("cannot open " + (dir / f).string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    h = fnv1a(buf.data(), buf.size(), h);
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

namespace {

std::uint64_t split_stream(const std::string& split) {
  if (split == "train") return 1;
  if (split == "val") return 2;
  if (split == "test") return 3;
  return fnv1a(split);
}

json info_to_json(const SplitInfo& info) {
  json seqs = json::array();
  for (std::size_t i = 0; i < info.files.size(); ++i) {
    seqs.push_back({{"file", info.files[i]}, {"action", info.actions[i]}, {"subject", info.subjects[i]}});
  }
  return {{"profile", info.profile},
          {"split", info.split},
          {"seed", info.seed},
          {"count", info.files.size()},
          {"scene", scene_to_json(info.scene)},
          {"sequences", seqs},
          {"content_hash", info.content_hash}};
}

}  // namespace

SplitInfo generate_split(const fs::path& dir, const DatasetProfile& profile, const std::string& split,
                         std::uint64_t seed, int count) {
  const int n = count < 0 ? profile.count(split) : count;
  require(n >= 1, "split needs at least one sequence");
  fs::create_directories(dir);
  const auto subjects = make_subjects(profile.n_subjects, seed);
  const auto& actions = all_actions();
  const std::uint64_t split_seed = mix_seed(seed, split_stream(split));
  SplitInfo info;
  info.profile = profile.name;
  info.split = split;
  info.scene = profile.scene;
  info.seed = seed;
  for (int i = 0; i < n; ++i) {
    SequenceSpec spec;
    const Action a = actions[static_cast<std::size_t>(i) % actions.size()];
    const int subj = static_cast<int>((i / actions.size()) % subjects.size());
    spec.motion.action = a;
    spec.motion.beta = subjects[subj].beta;
    spec.motion.gender = subjects[subj].gender;
    spec.seed = mix_seed(split_seed, static_cast<std::uint64_t>(i));
    const LabeledSequence seq = simulate_sequence(profile.scene, spec, default_body_model());
    std::ostringstream name;
    name << "seq_" << std::setw(5) << std::setfill('0') << i << ".rmt";
    write_container(dir / name.str(), sequence_to_container(seq));
    info.files.push_back(name.str());
    info.actions.push_back(action_name(a));
    info.subjects.push_back(subj);
  }
  info.content_hash = hash_split_files(dir, info.files);
  std::ofstream out(dir / "manifest.json");
  out << info_to_json(info).dump(2) << "\n";
  if (!out) throw IoError("cannot write manifest in " + dir.string());
  return info;
}

void generate_dataset(const fs::path& root, const DatasetProfile& profile, std::uint64_t seed) {
  for (const char* s : {"train", "val", "test"}) generate_split(root / s, profile, s, seed);
}

SplitInfo read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw IoError("no manifest.json in " + dir.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("bad manifest in " + dir.string() + ": " + e.what());
  }
  SplitInfo info;
  info.profile = j.value("profile", "");
  info.split = j.value("split", "");
  info.seed = j.value("seed", std::uint64_t{0});
  info.scene = scene_from_json(j.at("scene"));
  info.content_hash = j.value("content_hash", "");
  for (const auto& s : j.at("sequences")) {
    info.files.push_back(s.at("file").get<std::string>());
    info.actions.push_back(s.value("action", ""));
    info.subjects.push_back(s.value("subject", 0));
  }
  return info;
}

Split load_split(const fs::path& dir, const BodyModel& body) {
  Split s;
  s.info = read_manifest(dir);
  for (const auto& f : s.info.files) s.sequences.push_back(sequence_from_container(read_container(dir / f), body));
  return s;
}

std::vector<int> subset_indices(int n, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("dataset fraction must be in (0, 1]");
  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(mix_seed(seed, 0xf4ac));
  for (int i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int> pick(0, i);
    std::swap(perm[i], perm[pick(rng)]);
  }
  const int k = static_cast<int>(std::ceil(fraction * n - 1e-9));
  perm.resize(static_cast<std::size_t>(k));
  std::sort(perm.begin(), perm.end());
  return perm;
}

}  // namespace radarmesh
