#pragma once

// Skeleton sequences: the SKEL1 binary format, CSV import, kinematic trees and
// the joint -> bone transform, dataset manifests, and the seeded synthetic
// dataset used for desk-scale training.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dhg/tensor.hpp"

namespace dhg {

struct SequenceMeta {
  std::string dataset_id;
  std::string sample_id;
};

struct SkeletonSequence {
  Tensor<float> coords;  // [persons, frames, joints, channels]
  std::size_t label = 0;
  SequenceMeta meta;

  std::size_t persons() const { return coords.shape()[0]; }
  std::size_t frames() const { return coords.shape()[1]; }
  std::size_t joints() const { return coords.shape()[2]; }
  std::size_t channels() const { return coords.shape()[3]; }

  // M >= 1, T >= 2, N >= 2, C == 3; all coordinates finite.
  void validate() const;
  // True when every coordinate of `person` is exactly zero (padding slot).
  bool person_is_padding(std::size_t person) const;
};

inline constexpr std::size_t kCoordChannels = 3;
inline constexpr std::size_t kMaxPersons = 2;

void save_sequence(const SkeletonSequence& seq, const std::filesystem::path& path);
SkeletonSequence load_sequence(const std::filesystem::path& path);

// One row per frame; header columns p<m>_j<n>_<x|y|z> in person, joint,
// channel order.
SkeletonSequence load_csv(const std::filesystem::path& path, std::size_t label);

struct KinematicTree {
  std::vector<std::size_t> parent;  // parent[root] == root
  std::vector<std::string> names;

  std::size_t size() const { return parent.size(); }
  std::size_t root() const;
  // Exactly one root, every chain reaches it.
  void validate() const;

  // Lines "index parent [name]"; '#' starts a comment.
  static KinematicTree load(const std::filesystem::path& path);
};

// bone[m, t, i] = joint[m, t, i] - joint[m, t, parent[i]]; zero at the root.
SkeletonSequence to_bone_stream(const SkeletonSequence& seq, const KinematicTree& tree);

// Crops to the first `frames` frames, or loops the sequence to fill them.
SkeletonSequence fit_frames(const SkeletonSequence& seq, std::size_t frames);
// Sets M to `persons` by zero padding (or dropping trailing persons).
SkeletonSequence fit_persons(const SkeletonSequence& seq, std::size_t persons);
// Subtracts the mean position of the root joint of person 0 from every
// non-padding person.
SkeletonSequence center_sequence(const SkeletonSequence& seq, std::size_t root);

struct ManifestEntry {
  std::string path;
  std::size_t label = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  std::size_t num_classes = 0;
  std::string split = "train";
  std::filesystem::path base_dir;  // entry paths are relative to this

  std::filesystem::path resolve(const ManifestEntry& e) const { return base_dir / e.path; }
  void validate() const;
};

// "path<TAB>label" lines; "# num_classes=K" and "# split=S" header comments.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

struct SyntheticSpec {
  std::size_t num_classes = 4;
  std::size_t samples_per_class = 20;
  std::size_t test_samples_per_class = 5;
  std::size_t frames = 32;
  std::size_t joints = 25;
  std::uint64_t seed = 7;
  double noise_sigma = 0.01;
};

// Sample `index` of class `label` for a split ("train" or "test"). Each
// class moves every joint along its own sinusoid (frequency, phase and
// amplitude per joint and axis); samples differ by Gaussian noise only.
SkeletonSequence synthesize_sample(const SyntheticSpec& spec, std::size_t label, std::size_t index,
                                   const std::string& split);

struct SyntheticDataset {
  DatasetManifest train;
  DatasetManifest test;
  std::filesystem::path train_manifest;
  std::filesystem::path test_manifest;
};

// Writes <dir>/<split>/c<label>_s<index>.skel plus <dir>/train.txt and
// <dir>/test.txt (test split omitted when test_samples_per_class == 0).
SyntheticDataset gen_synthetic(const SyntheticSpec& spec, const std::filesystem::path& dir);

}  // namespace dhg
