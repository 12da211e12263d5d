// dhg: synthetic data, training, evaluation and inspection from the shell.

#include <CLI11.hpp>
#include <iostream>
#include <json.hpp>
#include <map>
#include <thread>

#include "dhg/gradcheck_suite.hpp"
#include "dhg/kernels.hpp"
#include "dhg/ntu25.hpp"
#include "dhg/train.hpp"

namespace {

using dhg::ErrorCode;
using json = nlohmann::ordered_json;

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kData = 3, kDiverged = 4 };

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kConfigError:
    case ErrorCode::kNoBranchEnabled:
      return kConfig;
    case ErrorCode::kBadMagic:
    case ErrorCode::kDimMismatch:
    case ErrorCode::kNonFiniteData:
    case ErrorCode::kTreeMismatch:
    case ErrorCode::kIoError:
    case ErrorCode::kDatasetError:
    case ErrorCode::kCheckpointMismatch:
    case ErrorCode::kLabelOutOfRange:
    case ErrorCode::kIsolatedNode:
      return kData;
    case ErrorCode::kDivergedLoss:
    case ErrorCode::kNonFinite:
      return kDiverged;
    default:
      return kFailure;
  }
}

// --config FILE plus one --<key> override per config key, applied in key order.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key = value config file");
    for (const std::string& key : dhg::TrainConfig::keys()) cmd->add_option("--" + key, values[key]);
  }

  dhg::TrainConfig resolve(CLI::App* cmd) const {
    dhg::TrainConfig cfg;
    if (!file.empty()) cfg.apply_text(dhg::read_text_file(file));
    std::size_t line = 0;
    for (const std::string& key : dhg::TrainConfig::keys())
      if (cmd->count("--" + key) > 0) cfg.apply({key, values.at(key), ++line});
    return cfg;
  }
};

json eval_json(const dhg::EvalMetrics& m) {
  json j{{"samples", m.samples}};
  for (const auto& [k, acc] : m.topk) j["top" + std::to_string(k)] = acc;
  return j;
}

dhg::Dataset dataset_for(const dhg::TrainConfig& cfg, const std::string& manifest, dhg::Stream stream) {
  return dhg::load_dataset(dhg::load_manifest(manifest), stream, cfg.frames, cfg.center, cfg.tree);
}

json hypergraph_json(const dhg::Hypergraph& hg, std::size_t knn_edges) {
  json knn = json::array(), clusters = json::array();
  for (std::size_t e = 0; e < hg.num_edges(); ++e) (e < knn_edges ? knn : clusters).push_back(hg.edges[e]);
  return json{{"knn", knn}, {"kmeans", clusters}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dynamic hypergraph convolution for skeleton action recognition"};
  app.require_subcommand(1);

  dhg::SyntheticSpec spec;
  std::string synth_out = "data/synthetic";
  auto* gen = app.add_subcommand("gen-synthetic", "Write the seeded synthetic dataset and its manifests");
  gen->add_option("--out", synth_out, "output directory");
  gen->add_option("--classes", spec.num_classes);
  gen->add_option("--per-class", spec.samples_per_class, "train samples per class");
  gen->add_option("--test-per-class", spec.test_samples_per_class);
  gen->add_option("--frames", spec.frames);
  gen->add_option("--joints", spec.joints);
  gen->add_option("--seed", spec.seed);
  gen->add_option("--noise", spec.noise_sigma);

  ConfigFlags train_flags;
  auto* train = app.add_subcommand("train", "Train one stream; writes model.dhgw and metrics.json to output_dir");
  train_flags.attach(train);
  bool print_config = false;
  train->add_flag("--print-config", print_config, "print the resolved config and exit");

  ConfigFlags eval_flags;
  std::string eval_ckpt, eval_manifest;
  auto* eval = app.add_subcommand("eval", "Top-k accuracy of a checkpoint on a manifest");
  eval_flags.attach(eval);
  eval->add_option("--checkpoint", eval_ckpt)->required();
  eval->add_option("--manifest", eval_manifest)->required();

  ConfigFlags two_flags;
  std::string joint_ckpt, bone_ckpt, two_manifest;
  auto* eval2 = app.add_subcommand("eval-2s", "Joint, bone and fused accuracy of two checkpoints");
  two_flags.attach(eval2);
  eval2->add_option("--joint", joint_ckpt)->required();
  eval2->add_option("--bone", bone_ckpt)->required();
  eval2->add_option("--manifest", two_manifest)->required();

  std::uint64_t gc_seed = 1;
  double gc_tol = 1e-5;
  bool gc_skip_block = false;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference checks of every primitive and a DHST block");
  gc->add_option("--seed", gc_seed);
  gc->add_option("--tolerance", gc_tol);
  gc->add_flag("--skip-block", gc_skip_block);

  ConfigFlags topo_flags;
  std::string topo_ckpt, topo_sample;
  std::size_t topo_person = 0;
  std::vector<std::size_t> topo_blocks;
  std::uint64_t topo_init = 1;
  auto* topo = app.add_subcommand("inspect-topology", "Dump per-frame dynamic hyperedges of one sample as JSON");
  topo_flags.attach(topo);
  topo->add_option("--checkpoint", topo_ckpt, "trained model (otherwise a fresh model from the config)");
  topo->add_option("--sample", topo_sample, "SKEL1 file")->required();
  topo->add_option("--person", topo_person);
  topo->add_option("--block", topo_blocks, "block indices to dump (default all)");
  topo->add_option("--init-seed", topo_init, "initialization seed for a fresh model");

  std::string info_ckpt;
  auto* info = app.add_subcommand("info", "Build, thread and model summary");
  info->add_option("--checkpoint", info_ckpt);

  std::string csv_in, csv_out;
  std::size_t csv_label = 0;
  auto* csv = app.add_subcommand("convert-csv", "Convert a per-frame CSV export into a SKEL1 file");
  csv->add_option("--csv", csv_in)->required();
  csv->add_option("--label", csv_label);
  csv->add_option("--out", csv_out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*gen) {
      const dhg::SyntheticDataset ds = dhg::gen_synthetic(spec, synth_out);
      std::cout << json{{"train_manifest", ds.train_manifest.string()},
                        {"test_manifest", ds.test_manifest.string()},
                        {"train_samples", ds.train.entries.size()},
                        {"test_samples", ds.test.entries.size()}}
                       .dump(2)
                << "\n";
      return kOk;
    }
    if (*train) {
      const dhg::TrainConfig cfg = train_flags.resolve(train);
      if (print_config) {
        cfg.validate();
        std::cout << cfg.to_text();
        return kOk;
      }
      const dhg::TrainResult r = dhg::train(cfg, [](const dhg::EpochMetrics& e) {
        std::cerr << "epoch " << e.epoch << "  lr " << e.lr << "  loss " << e.loss << "  acc " << e.train_accuracy
                  << "  " << e.seconds << " s" << std::endl;
      });
      std::cout << dhg::metrics_json(r.report, true);
      std::cerr << "checkpoint " << r.checkpoint.string() << "\n";
      return kOk;
    }
    if (*eval) {
      const dhg::TrainConfig cfg = eval_flags.resolve(eval);
      auto net = dhg::load_network<float>(eval_ckpt);
      const dhg::Dataset data = dataset_for(cfg, eval_manifest, cfg.stream);
      std::cout << eval_json(dhg::evaluate(*net, data, cfg.topk, cfg.batch_size)).dump(2) << "\n";
      return kOk;
    }
    if (*eval2) {
      const dhg::TrainConfig cfg = two_flags.resolve(eval2);
      auto joint = dhg::load_network<float>(joint_ckpt);
      auto bone = dhg::load_network<float>(bone_ckpt);
      const dhg::Dataset jd = dataset_for(cfg, two_manifest, dhg::Stream::kJoint);
      const dhg::Dataset bd = dataset_for(cfg, two_manifest, dhg::Stream::kBone);
      const dhg::TwoStreamReport r = dhg::two_stream_eval(*joint, *bone, jd, bd, cfg.topk, cfg.batch_size);
      std::cout << json{{"joint", eval_json(r.joint)}, {"bone", eval_json(r.bone)}, {"fused", eval_json(r.fused)}}.dump(2)
                << "\n";
      return kOk;
    }
    if (*gc) {
      bool ok = true;
      for (const auto& c : dhg::gradcheck_suite(gc_seed, !gc_skip_block)) {
        const bool pass = c.worst_error() < gc_tol;
        ok = ok && pass;
        std::printf("%-28s %-4s max rel err %.3e\n", c.op.c_str(), pass ? "ok" : "FAIL", c.worst_error());
      }
      return ok ? kOk : kFailure;
    }
    if (*topo) {
      const dhg::TrainConfig cfg = topo_flags.resolve(topo);
      std::unique_ptr<dhg::DhstNetwork<float>> net =
          topo_ckpt.empty() ? std::make_unique<dhg::DhstNetwork<float>>(cfg.model, topo_init)
                            : dhg::load_network<float>(topo_ckpt);
      require(net->config().branches.dynamic_topology, ErrorCode::kConfigError, "model has no dynamic-topology branch");
      dhg::SkeletonSequence seq = dhg::load_sequence(topo_sample);
      require(topo_person < seq.persons(), ErrorCode::kDatasetError, "sample has no person " + std::to_string(topo_person));
      dhg::SkeletonSequence one = seq;
      one.coords = dhg::Tensor<float>({1, seq.frames(), seq.joints(), seq.channels()});
      std::copy_n(seq.coords.ptr() + topo_person * one.coords.size(), one.coords.size(), one.coords.ptr());
      if (cfg.stream == dhg::Stream::kBone)
        one = dhg::to_bone_stream(one, cfg.tree.empty() ? dhg::ntu25_tree() : dhg::KinematicTree::load(cfg.tree));
      dhg::TopologyTrace trace;
      dhg::Tape<float> tape(dhg::Tape<float>::Mode::kNoGrad);
      dhg::ForwardOptions opts;
      opts.trace = &trace;
      net->forward(tape, dhg::make_batch<float>({&one}), opts);
      json blocks = json::array();
      const std::size_t n = net->config().num_nodes;
      for (std::size_t b = 0; b < trace.size(); ++b) {
        if (!topo_blocks.empty() && std::find(topo_blocks.begin(), topo_blocks.end(), b) == topo_blocks.end()) continue;
        json frames = json::array();
        for (std::size_t t = 0; t < trace[b][0].size(); ++t) {
          json f = hypergraph_json(trace[b][0][t], n);
          f["frame"] = t;
          frames.push_back(f);
        }
        blocks.push_back(json{{"block", b}, {"frames", frames}});
      }
      const auto& tp = net->config().topology;
      std::cout << json{{"sample", topo_sample},
                        {"person", topo_person},
                        {"k_n", tp.k_n},
                        {"k_m", tp.k_m},
                        {"space", tp.space == dhg::TopologySpace::kEmbedded ? "embedded" : "raw"},
                        {"blocks", blocks}}
                       .dump(2)
                << "\n";
      return kOk;
    }
    if (*info) {
      std::unique_ptr<dhg::DhstNetwork<float>> net =
          info_ckpt.empty() ? std::make_unique<dhg::DhstNetwork<float>>(dhg::ModelConfig(), 1)
                            : dhg::load_network<float>(info_ckpt);
      json blocks = json::array();
      for (const auto& b : net->config().blocks())
        blocks.push_back(json{{"in", b.in_channels}, {"out", b.out_channels}, {"stride", b.temporal_stride},
                              {"dilation", b.temporal_dilation}});
      std::cout << json{{"threads", dhg::kernels::max_threads()},
                        {"hardware_concurrency", std::thread::hardware_concurrency()},
                        {"checkpoint", info_ckpt.empty() ? "none" : info_ckpt},
                        {"parameters", net->parameter_count()},
                        {"num_classes", net->config().num_classes},
                        {"digest", net->config().digest()},
                        {"blocks", blocks}}
                       .dump(2)
                << "\n";
      return kOk;
    }
    if (*csv) {
      dhg::SkeletonSequence seq = dhg::load_csv(csv_in, csv_label);
      dhg::save_sequence(seq, csv_out);
      std::cout << json{{"out", csv_out}, {"persons", seq.persons()}, {"frames", seq.frames()}, {"joints", seq.joints()}}.dump(2)
                << "\n";
      return kOk;
    }
  } catch (const dhg::Error& e) {
    std::cerr << "dhg: " << e.what() << "\n";
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "dhg: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
