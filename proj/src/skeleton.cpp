#include "dhg/skeleton.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <sstream>

#include "dhg/binary_io.hpp"
#include "dhg/rng.hpp"

namespace dhg {

namespace fs = std::filesystem;

namespace {

constexpr char kSkelMagic[4] = {'S', 'K', 'E', 'L'};
constexpr std::uint8_t kSkelVersion = 1;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void SkeletonSequence::validate() const {
  require(coords.rank() == 4, ErrorCode::kDimMismatch, "coords must be [M, T, N, C], got " + shape_str(coords.shape()));
  require(persons() >= 1, ErrorCode::kDimMismatch, "need at least one person");
  require(frames() >= 2, ErrorCode::kDimMismatch, "need at least two frames, got " + std::to_string(frames()));
  require(joints() >= 2, ErrorCode::kDimMismatch, "need at least two joints, got " + std::to_string(joints()));
  require(channels() == kCoordChannels, ErrorCode::kDimMismatch,
          "need 3 coordinate channels, got " + std::to_string(channels()));
  require(coords.all_finite(), ErrorCode::kNonFiniteData, "non-finite coordinate in " + meta.sample_id);
}

bool SkeletonSequence::person_is_padding(std::size_t person) const {
  const std::size_t stride = frames() * joints() * channels();
  const float* p = coords.ptr() + person * stride;
  return std::all_of(p, p + stride, [](float v) { return v == 0.0f; });
}

void save_sequence(const SkeletonSequence& seq, const fs::path& path) {
  seq.validate();
  std::ofstream out(path, std::ios::binary);
  require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write " + path.string());
  out.write(kSkelMagic, 4);
  out.put(static_cast<char>(kSkelVersion));
  for (std::size_t d : seq.coords.shape()) io::write_u32(out, static_cast<std::uint32_t>(d));
  io::write_u32(out, static_cast<std::uint32_t>(seq.label));
  for (float v : seq.coords.data()) io::write_f32(out, v);
  require(static_cast<bool>(out), ErrorCode::kIoError, "write failed for " + path.string());
}

SkeletonSequence load_sequence(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  const int version = in.get();
  require(in && std::equal(magic, magic + 4, kSkelMagic) && version == kSkelVersion, ErrorCode::kBadMagic,
          path.string() + " is not a SKEL1 file");
  std::uint32_t dims[4];
  std::uint32_t label = 0;
  for (auto& d : dims) require(io::read_u32(in, d), ErrorCode::kDimMismatch, path.string() + ": truncated header");
  require(io::read_u32(in, label), ErrorCode::kDimMismatch, path.string() + ": truncated header");
  for (auto d : dims) require(d > 0, ErrorCode::kDimMismatch, path.string() + ": zero extent");
  const std::uint64_t count = std::uint64_t{dims[0]} * dims[1] * dims[2] * dims[3];
  // Size check before allocating so a corrupt header cannot request gigabytes.
  const auto header_end = in.tellg();
  in.seekg(0, std::ios::end);
  const auto payload = static_cast<std::uint64_t>(in.tellg() - header_end);
  require(payload == count * 4, ErrorCode::kDimMismatch,
          path.string() + ": payload of " + std::to_string(payload) + " bytes, header implies " +
              std::to_string(count * 4));
  in.seekg(header_end);
  std::vector<float> data(count);
  for (float& v : data) require(io::read_f32(in, v), ErrorCode::kDimMismatch, path.string() + ": truncated payload");
  SkeletonSequence seq;
  seq.coords = Tensor<float>({dims[0], dims[1], dims[2], dims[3]}, std::move(data));
  seq.label = label;
  seq.meta.sample_id = path.stem().string();
  seq.meta.dataset_id = path.parent_path().filename().string();
  seq.validate();
  return seq;
}

SkeletonSequence load_csv(const fs::path& path, std::size_t label) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kIoError, "cannot open " + path.string());
  std::string header;
  require(static_cast<bool>(std::getline(in, header)), ErrorCode::kDimMismatch, path.string() + ": empty CSV");
  std::vector<std::string> cols;
  {
    std::stringstream ss(header);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(trim(c));
  }
  std::size_t persons = 0, joints = 0;
  for (const std::string& c : cols) {
    unsigned m = 0, j = 0;
    char axis = 0;
    require(std::sscanf(c.c_str(), "p%u_j%u_%c", &m, &j, &axis) == 3, ErrorCode::kDimMismatch,
            path.string() + ": bad column '" + c + "'");
    persons = std::max<std::size_t>(persons, m + 1);
    joints = std::max<std::size_t>(joints, j + 1);
  }
  require(cols.size() == persons * joints * kCoordChannels, ErrorCode::kDimMismatch,
          path.string() + ": header does not cover every person/joint/axis");
  static constexpr char kAxes[] = {'x', 'y', 'z'};
  for (std::size_t i = 0; i < cols.size(); ++i) {
    std::ostringstream want;
    want << 'p' << i / (joints * 3) << "_j" << (i / 3) % joints << '_' << kAxes[i % 3];
    require(cols[i] == want.str(), ErrorCode::kDimMismatch,
            path.string() + ": column " + std::to_string(i) + " is '" + cols[i] + "', expected '" + want.str() + "'");
  }
  std::vector<std::vector<float>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<float> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stof(trim(cell)));
      } catch (const std::exception&) {
        // stof rejects out-of-range magnitudes; map them to Inf so validate() reports NonFiniteData.
        const std::string t = trim(cell);
        require(!t.empty(), ErrorCode::kDimMismatch, path.string() + ": empty cell");
        row.push_back(std::numeric_limits<float>::infinity());
      }
    }
    require(row.size() == cols.size(), ErrorCode::kDimMismatch,
            path.string() + ": row " + std::to_string(rows.size() + 1) + " has " + std::to_string(row.size()) + " cells");
    rows.push_back(std::move(row));
  }
  const std::size_t frames = rows.size();
  require(frames >= 1, ErrorCode::kDimMismatch, path.string() + ": no frames");
  SkeletonSequence seq;
  seq.coords = Tensor<float>({persons, frames, joints, kCoordChannels});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const std::size_t m = i / (joints * 3), j = (i / 3) % joints, c = i % 3;
      seq.coords(m, t, j, c) = rows[t][i];
    }
  seq.label = label;
  seq.meta.sample_id = path.stem().string();
  seq.validate();
  return seq;
}

std::size_t KinematicTree::root() const {
  for (std::size_t i = 0; i < parent.size(); ++i)
    if (parent[i] == i) return i;
  fail(ErrorCode::kTreeMismatch, "kinematic tree has no root");
}

void KinematicTree::validate() const {
  require(!parent.empty(), ErrorCode::kTreeMismatch, "empty kinematic tree");
  std::size_t roots = 0;
  for (std::size_t i = 0; i < parent.size(); ++i) {
    require(parent[i] < parent.size(), ErrorCode::kTreeMismatch, "parent index out of range at joint " + std::to_string(i));
    roots += parent[i] == i;
  }
  require(roots == 1, ErrorCode::kTreeMismatch, "kinematic tree needs exactly one root, found " + std::to_string(roots));
  for (std::size_t i = 0; i < parent.size(); ++i) {
    std::size_t cur = i;
    for (std::size_t steps = 0; parent[cur] != cur; ++steps) {
      require(steps < parent.size(), ErrorCode::kTreeMismatch, "cycle through joint " + std::to_string(i));
      cur = parent[cur];
    }
  }
}

KinematicTree KinematicTree::load(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kConfigError, "cannot open kinematic tree " + path.string());
  std::vector<std::pair<std::size_t, std::size_t>> links;
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    std::istringstream ss(line);
    long idx = -1, par = -1;
    std::string name;
    require(static_cast<bool>(ss >> idx >> par) && idx >= 0 && par >= 0, ErrorCode::kConfigError,
            path.string() + ": bad tree line '" + line + "'");
    ss >> name;
    links.emplace_back(static_cast<std::size_t>(idx), static_cast<std::size_t>(par));
    names.push_back(name);
  }
  KinematicTree tree;
  tree.parent.assign(links.size(), links.size());
  tree.names.assign(links.size(), "");
  for (std::size_t k = 0; k < links.size(); ++k) {
    const auto [idx, par] = links[k];
    require(idx < links.size() && tree.parent[idx] == links.size(), ErrorCode::kConfigError,
            path.string() + ": joint indices must be 0..N-1, each listed once");
    tree.parent[idx] = par;
    tree.names[idx] = names[k];
  }
  try {
    tree.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kConfigError, path.string() + ": " + e.what());
  }
  return tree;
}

SkeletonSequence to_bone_stream(const SkeletonSequence& seq, const KinematicTree& tree) {
  require(tree.size() == seq.joints(), ErrorCode::kTreeMismatch,
          "tree has " + std::to_string(tree.size()) + " joints, sequence has " + std::to_string(seq.joints()));
  SkeletonSequence out = seq;
  for (std::size_t m = 0; m < seq.persons(); ++m)
    for (std::size_t t = 0; t < seq.frames(); ++t)
      for (std::size_t i = 0; i < seq.joints(); ++i)
        for (std::size_t c = 0; c < seq.channels(); ++c)
          out.coords(m, t, i, c) = seq.coords(m, t, i, c) - seq.coords(m, t, tree.parent[i], c);
  return out;
}

SkeletonSequence fit_frames(const SkeletonSequence& seq, std::size_t frames) {
  require(frames >= 2, ErrorCode::kConfigError, "frame window must be >= 2");
  if (frames == seq.frames()) return seq;
  SkeletonSequence out = seq;
  const std::size_t m = seq.persons(), n = seq.joints(), c = seq.channels();
  out.coords = Tensor<float>({m, frames, n, c});
  const std::size_t plane = n * c;
  for (std::size_t p = 0; p < m; ++p)
    for (std::size_t t = 0; t < frames; ++t)
      std::copy_n(seq.coords.ptr() + (p * seq.frames() + t % seq.frames()) * plane, plane,
                  out.coords.ptr() + (p * frames + t) * plane);
  return out;
}

SkeletonSequence fit_persons(const SkeletonSequence& seq, std::size_t persons) {
  if (persons == seq.persons()) return seq;
  SkeletonSequence out = seq;
  const std::size_t stride = seq.frames() * seq.joints() * seq.channels();
  out.coords = Tensor<float>({persons, seq.frames(), seq.joints(), seq.channels()});
  std::copy_n(seq.coords.ptr(), std::min(persons, seq.persons()) * stride, out.coords.ptr());
  return out;
}

SkeletonSequence center_sequence(const SkeletonSequence& seq, std::size_t root) {
  require(root < seq.joints(), ErrorCode::kTreeMismatch, "root joint out of range");
  double mean[kCoordChannels] = {0, 0, 0};
  for (std::size_t t = 0; t < seq.frames(); ++t)
    for (std::size_t c = 0; c < kCoordChannels; ++c) mean[c] += seq.coords(0, t, root, c);
  for (double& v : mean) v /= static_cast<double>(seq.frames());
  SkeletonSequence out = seq;
  for (std::size_t m = 0; m < seq.persons(); ++m) {
    if (seq.person_is_padding(m)) continue;
    for (std::size_t t = 0; t < seq.frames(); ++t)
      for (std::size_t i = 0; i < seq.joints(); ++i)
        for (std::size_t c = 0; c < kCoordChannels; ++c)
          out.coords(m, t, i, c) = static_cast<float>(seq.coords(m, t, i, c) - mean[c]);
  }
  return out;
}

void DatasetManifest::validate() const {
  require(num_classes > 0, ErrorCode::kDatasetError, "manifest declares no classes");
  for (const ManifestEntry& e : entries)
    require(e.label < num_classes, ErrorCode::kDatasetError,
            "label " + std::to_string(e.label) + " of " + e.path + " outside [0, " + std::to_string(num_classes) + ")");
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorCode::kDatasetError, "cannot open manifest " + path.string());
  DatasetManifest manifest;
  manifest.base_dir = path.parent_path();
  bool declared = false;
  std::string line;
  std::size_t max_label = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      if (body.rfind("num_classes=", 0) == 0) {
        try {
          manifest.num_classes = std::stoul(body.substr(12));
        } catch (const std::exception&) {
          fail(ErrorCode::kDatasetError, path.string() + ": bad header '" + line + "'");
        }
        declared = true;
      } else if (body.rfind("split=", 0) == 0) {
        manifest.split = body.substr(6);
      }
      continue;
    }
    const auto tab = line.rfind('\t');
    require(tab != std::string::npos, ErrorCode::kDatasetError, path.string() + ": expected 'path<TAB>label', got '" + line + "'");
    ManifestEntry e;
    e.path = line.substr(0, tab);
    try {
      e.label = std::stoul(line.substr(tab + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::kDatasetError, path.string() + ": bad label in '" + line + "'");
    }
    max_label = std::max(max_label, e.label);
    manifest.entries.push_back(std::move(e));
  }
  if (!declared) manifest.num_classes = manifest.entries.empty() ? 0 : max_label + 1;
  manifest.validate();
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  manifest.validate();
  std::ofstream out(path);
  require(static_cast<bool>(out), ErrorCode::kIoError, "cannot write " + path.string());
  out << "# num_classes=" << manifest.num_classes << "\n# split=" << manifest.split << "\n";
  for (const ManifestEntry& e : manifest.entries) out << e.path << '\t' << e.label << '\n';
  require(static_cast<bool>(out), ErrorCode::kIoError, "write failed for " + path.string());
}

namespace {

struct JointMotion {
  double frequency, phase, amplitude;
};

}  // namespace

SkeletonSequence synthesize_sample(const SyntheticSpec& spec, std::size_t label, std::size_t index,
                                   const std::string& split) {
  require(spec.num_classes > 0 && spec.frames >= 2 && spec.joints >= 2, ErrorCode::kConfigError,
          "synthetic dataset parameters must be positive (frames, joints >= 2)");
  require(label < spec.num_classes, ErrorCode::kLabelOutOfRange, "synthetic label out of range");
  const std::size_t n = spec.joints, frames = spec.frames;

  // Rest pose shared by all classes.
  std::mt19937_64 pose_rng(derive_seed(spec.seed, 0x706f7365));
  std::uniform_real_distribution<double> pose(-0.5, 0.5);
  std::vector<double> rest(n * kCoordChannels);
  for (double& v : rest) v = pose(pose_rng);

  std::mt19937_64 class_rng(derive_seed(spec.seed, 0x636c6173, label));
  std::uniform_int_distribution<int> freq(1, 3);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> amp(0.05, 0.25);
  std::vector<JointMotion> motion(n * kCoordChannels);
  for (JointMotion& jm : motion) {
    jm.frequency = freq(class_rng);
    jm.phase = phase(class_rng);
    jm.amplitude = amp(class_rng);
  }

  std::mt19937_64 noise_rng(derive_seed(spec.seed, split == "train" ? 0x747261696e : 0x74657374, label, index));
  std::normal_distribution<double> noise(0.0, spec.noise_sigma);

  SkeletonSequence seq;
  seq.coords = Tensor<float>({kMaxPersons, frames, n, kCoordChannels});
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t i = 0; i < n * kCoordChannels; ++i) {
      const JointMotion& jm = motion[i];
      const double angle = 2.0 * std::numbers::pi * jm.frequency * static_cast<double>(t) / static_cast<double>(frames) + jm.phase;
      seq.coords[t * n * kCoordChannels + i] = static_cast<float>(rest[i] + jm.amplitude * std::sin(angle) + noise(noise_rng));
    }
  seq.label = label;
  std::ostringstream id;
  id << 'c' << label << "_s" << std::setw(3) << std::setfill('0') << index;
  seq.meta.sample_id = id.str();
  seq.meta.dataset_id = "synthetic-" + split;
  return seq;
}

SyntheticDataset gen_synthetic(const SyntheticSpec& spec, const fs::path& dir) {
  require(spec.samples_per_class > 0, ErrorCode::kConfigError, "samples_per_class must be positive");
  std::error_code ec;
  fs::create_directories(dir, ec);
  require(!ec, ErrorCode::kIoError, "cannot create " + dir.string() + ": " + ec.message());

  SyntheticDataset ds;
  auto write_split = [&](const std::string& split, std::size_t per_class) {
    DatasetManifest manifest;
    manifest.num_classes = spec.num_classes;
    manifest.split = split;
    manifest.base_dir = dir;
    fs::create_directories(dir / split, ec);
    require(!ec, ErrorCode::kIoError, "cannot create " + (dir / split).string());
    for (std::size_t c = 0; c < spec.num_classes; ++c)
      for (std::size_t k = 0; k < per_class; ++k) {
        SkeletonSequence seq = synthesize_sample(spec, c, k, split);
        const std::string rel = split + "/" + seq.meta.sample_id + ".skel";
        save_sequence(seq, dir / rel);
        manifest.entries.push_back({rel, c});
      }
    const fs::path mpath = dir / (split + ".txt");
    save_manifest(manifest, mpath);
    return std::pair{manifest, mpath};
  };
  std::tie(ds.train, ds.train_manifest) = write_split("train", spec.samples_per_class);
  if (spec.test_samples_per_class > 0) std::tie(ds.test, ds.test_manifest) = write_split("test", spec.test_samples_per_class);
  return ds;
}

}  // namespace dhg
