// txd: corrects noisy taxonomic labels on metagenomic contigs by jointly
// training a teacher head over sequence embeddings and a lightweight student
// MLP with a hierarchical loss and temperature-scaled distillation, then
// decodes and scores the corrected labels.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>

#include "txd/common.hpp"
#include "txd/distill.hpp"
#include "txd/embeddings.hpp"
#include "txd/fasta.hpp"
#include "txd/features.hpp"
#include "txd/inference.hpp"
#include "txd/kernels.hpp"
#include "txd/simulate.hpp"
#include "txd/taxonomy.hpp"
#include "txd/tnf.hpp"

namespace fs = std::filesystem;

namespace {

// Removes registered output files unless disarmed, so failures never leave
// partial artifacts behind.
class OutputGuard {
 public:
  ~OutputGuard() {
    if (armed_)
      for (const fs::path& p : paths_) {
        std::error_code ec;
        fs::remove(p, ec);
      }
  }
  void add(const fs::path& p) { paths_.push_back(p); }
  void disarm() { armed_ = false; }

 private:
  std::vector<fs::path> paths_;
  bool armed_ = true;
};

std::ifstream open_input(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw txd::ValidationError("cannot open input file: " + p.string());
  return in;
}

std::ofstream open_output(const fs::path& p, OutputGuard& guard) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + p.string());
  guard.add(p);
  return out;
}

std::vector<txd::ContigRecord> load_filtered_fasta(const fs::path& path, std::size_t min_len,
                                                   std::size_t max_len) {
  std::ifstream in = open_input(path);
  txd::FastaParseResult parsed = txd::parse_fasta(in);
  if (parsed.replaced > 0)
    std::cerr << "[txd] " << path.filename().string() << ": " << parsed.replaced
              << " non-ACGTN characters mapped to N\n";
  std::vector<txd::ContigRecord> kept;
  kept.reserve(parsed.records.size());
  for (auto& rec : parsed.records) {
    const std::size_t len = rec.length();
    if (len < min_len || (max_len > 0 && len > max_len)) continue;
    kept.push_back(std::move(rec));
  }
  const std::size_t dropped = parsed.records.size() - kept.size();
  if (dropped > 0)
    std::cerr << "[txd] length filter dropped " << dropped << " of " << parsed.records.size()
              << " contigs\n";
  return kept;
}

std::unique_ptr<txd::EmbeddingProvider> load_embedding_file(const fs::path& path) {
  std::ifstream in = open_input(path);
  char magic[4] = {};
  in.read(magic, 4);
  in.seekg(0);
  if (std::string_view(magic, 4) == "TXDE") return txd::FileEmbeddingProvider::from_binary(in);
  return txd::FileEmbeddingProvider::from_tsv(in);
}

std::map<std::string, txd::RankedPath> load_label_map(const fs::path& path) {
  std::ifstream in = open_input(path);
  std::map<std::string, txd::RankedPath> out;
  for (auto& [id, p] : txd::load_label_tsv(in)) {
    if (!out.emplace(id, std::move(p)).second)
      throw txd::ValidationError(path.string() + ": duplicate contig id " + id);
  }
  return out;
}

std::size_t pick_rank(const std::map<std::string, txd::RankedPath>& truth, int rank_flag) {
  return rank_flag >= 0 ? static_cast<std::size_t>(rank_flag) : txd::deepest_rank(truth);
}

// ---------------------------------------------------------------------------

struct FeaturizeArgs {
  fs::path fasta, abundances, out;
  std::size_t min_length = 2000;
  std::size_t max_length = 0;  // 0 = unbounded
  unsigned threads = 1;
  bool zscore_tnf = true;
};

int cmd_featurize(const FeaturizeArgs& a) {
  const std::vector<txd::ContigRecord> records = load_filtered_fasta(a.fasta, a.min_length, a.max_length);
  if (records.empty()) throw std::runtime_error("featurize: no contigs survive the length filter");

  std::vector<std::string> ids;
  ids.reserve(records.size());
  for (const auto& r : records) ids.push_back(r.id);

  std::ifstream ab_in = open_input(a.abundances);
  const txd::AbundanceTable table = txd::load_abundances(ab_in, ids);

  const txd::TnfKernel kernel = txd::build_tnf_kernel();
  txd::AssembleOptions opts;
  opts.threads = a.threads;
  opts.zscore_tnf = a.zscore_tnf;
  txd::AssembleResult assembled = txd::assemble_features(records, kernel, table, opts);
  if (!assembled.dropped.empty()) {
    std::cerr << "[txd] dropped " << assembled.dropped.size() << " contigs with no usable 4-mer window:";
    for (const auto& id : assembled.dropped) std::cerr << ' ' << id;
    std::cerr << '\n';
  }

  OutputGuard guard;
  std::ofstream out = open_output(a.out, guard);
  txd::write_feature_cache(out, assembled.features);
  out.close();
  guard.disarm();
  std::cerr << "[txd] wrote " << assembled.features.data.rows << " x " << assembled.features.width()
            << " feature matrix (D=" << assembled.features.tnf_dim << ", K=" << assembled.features.n_samples
            << ") to " << a.out.string() << '\n';
  return 0;
}

struct TrainArgs {
  fs::path features, labels, out_dir;
  std::optional<fs::path> fasta, embeddings;
  txd::DistillConfig config;
  std::size_t embed_dim = 256;
  std::uint64_t embed_seed = 1;
  unsigned threads = 1;
};

int cmd_train(const TrainArgs& a) {
  std::ifstream feat_in = open_input(a.features);
  const txd::FeatureMatrix fm = txd::read_feature_cache(feat_in);

  const std::map<std::string, txd::RankedPath> labels = load_label_map(a.labels);
  std::vector<txd::RankedPath> targets(fm.contig_ids.size());
  std::size_t unlabeled = 0;
  for (std::size_t i = 0; i < fm.contig_ids.size(); ++i) {
    auto it = labels.find(fm.contig_ids[i]);
    if (it != labels.end())
      targets[i] = it->second;
    else
      ++unlabeled;  // missing row = unassigned
  }
  if (unlabeled) std::cerr << "[txd] " << unlabeled << " contigs have no pseudo-label row; treated as unassigned\n";

  const txd::TaxTree tree = txd::TaxTree::build(targets);
  if (tree.leaf_count() < 2)
    throw txd::ValidationError("train: the pseudo-labels span fewer than 2 distinct leaves");

  // Teacher inputs: file-backed embeddings, or the built-in k-mer projection
  // over the raw sequences.
  txd::Matrix embeddings;
  if (a.embeddings) {
    const auto provider = load_embedding_file(*a.embeddings);
    embeddings = txd::Matrix(fm.contig_ids.size(), provider->dim());
    for (std::size_t i = 0; i < fm.contig_ids.size(); ++i) {
      const auto e = provider->embed(txd::ContigRecord{fm.contig_ids[i], {}});
      std::copy(e.begin(), e.end(), embeddings.row(i));
    }
  } else {
    if (!a.fasta)
      throw txd::ValidationError("train: --fasta is required when no --embeddings file is given");
    const std::vector<txd::ContigRecord> records = load_filtered_fasta(*a.fasta, 0, 0);
    std::unordered_map<std::string, const txd::ContigRecord*> by_id;
    for (const auto& r : records) by_id.emplace(r.id, &r);
    std::vector<const txd::ContigRecord*> ordered(fm.contig_ids.size());
    for (std::size_t i = 0; i < fm.contig_ids.size(); ++i) {
      auto it = by_id.find(fm.contig_ids[i]);
      if (it == by_id.end())
        throw txd::ValidationError("train: contig " + fm.contig_ids[i] + " in features but not in FASTA");
      ordered[i] = it->second;
    }
    const txd::KmerProjectionProvider provider(a.embed_dim, a.embed_seed);
    embeddings = txd::Matrix(ordered.size(), provider.dim());
    txd::parallel_for(ordered.size(), a.threads, [&](std::size_t i) {
      const auto e = provider.embed(*ordered[i]);
      std::copy(e.begin(), e.end(), embeddings.row(i));
    });
  }

  txd::TrainingData data;
  data.features = &fm.data;
  data.embeddings = &embeddings;
  data.target_nodes = txd::resolve_targets(tree, targets);

  OutputGuard guard;
  fs::create_directories(a.out_dir);

  txd::EpochCallback on_epoch;
  if (a.config.checkpoint_every > 0) {
    on_epoch = [&](const txd::TrainState& st) {
      if (st.epoch % a.config.checkpoint_every != 0 || st.epoch == a.config.epochs) return;
      const fs::path path = a.out_dir / ("checkpoint_epoch_" + std::to_string(st.epoch) + ".txdm");
      std::ofstream out = open_output(path, guard);
      txd::write_checkpoint(out, txd::Checkpoint{tree, a.config, st.student, st.teacher_head, st.history});
    };
  }

  const txd::TrainState state = txd::train(data, tree, a.config, on_epoch);

  {
    std::ofstream out = open_output(a.out_dir / "checkpoint.txdm", guard);
    txd::write_checkpoint(out, txd::Checkpoint{tree, a.config, state.student, state.teacher_head, state.history});
  }
  {
    std::ofstream out = open_output(a.out_dir / "loss_history.tsv", guard);
    out << "epoch\thier_teacher\thier_student\tkd\n";
    char buf[96];
    for (std::size_t e = 0; e < state.history.size(); ++e) {
      std::snprintf(buf, sizeof buf, "%zu\t%.12g\t%.12g\t%.12g\n", e + 1, state.history[e].hier_teacher,
                    state.history[e].hier_student, state.history[e].kd);
      out << buf;
    }
    if (!out) throw std::runtime_error("train: failed writing loss history");
  }
  guard.disarm();
  std::cerr << "[txd] trained " << state.epoch << " epochs on " << fm.data.rows << " contigs, |N|="
            << tree.leaf_count() << "; checkpoint at " << (a.out_dir / "checkpoint.txdm").string() << '\n';
  return 0;
}

struct PredictArgs {
  fs::path checkpoint, features, out;
  unsigned threads = 1;
};

int cmd_predict(const PredictArgs& a) {
  std::ifstream cp_in = open_input(a.checkpoint);
  const txd::Checkpoint cp = txd::read_checkpoint(cp_in);
  std::ifstream feat_in = open_input(a.features);
  const txd::FeatureMatrix fm = txd::read_feature_cache(feat_in);
  if (fm.width() != cp.student.input_dim())
    throw txd::ValidationError("predict: feature width " + std::to_string(fm.width()) +
                               " does not match the checkpoint's input dim " +
                               std::to_string(cp.student.input_dim()));

  const txd::Matrix logits = txd::forward(cp.student, fm.data);
  std::vector<txd::Prediction> preds(fm.data.rows);
  txd::parallel_for(fm.data.rows, a.threads, [&](std::size_t i) {
    const std::vector<double> probs = txd::leaf_probabilities(logits.row_span(i));
    preds[i] = txd::decode(cp.tree, probs);
    preds[i].contig_id = fm.contig_ids[i];
  });

  OutputGuard guard;
  std::ofstream out = open_output(a.out, guard);
  txd::write_predictions_tsv(out, preds);
  out.close();
  guard.disarm();
  std::cerr << "[txd] wrote " << preds.size() << " predictions to " << a.out.string() << '\n';
  return 0;
}

struct EvalArgs {
  fs::path predictions, truth, out;
  int rank = -1;  // -1 = deepest rank in truth
};

int cmd_eval(const EvalArgs& a) {
  std::ifstream pred_in = open_input(a.predictions);
  const std::vector<txd::Prediction> preds = txd::read_predictions_tsv(pred_in);
  const std::map<std::string, txd::RankedPath> truth = load_label_map(a.truth);
  const std::size_t rank = pick_rank(truth, a.rank);

  const txd::EvalCounts counts = txd::evaluate(preds, truth, rank);
  const txd::Metrics m = txd::metrics(counts);

  OutputGuard guard;
  std::ofstream out = open_output(a.out, guard);
  txd::write_eval_tsv(out, counts, m, rank);
  out.close();
  guard.disarm();
  char buf[96];
  std::snprintf(buf, sizeof buf, "recall=%.4f precision=%.4f f1=%.4f", m.recall, m.precision, m.f1);
  std::cerr << "[txd] rank " << rank << ": correct=" << counts.correct << " wrong=" << counts.wrong
            << " no_label=" << counts.no_label << "  " << buf << '\n';
  return 0;
}

struct TransitionsArgs {
  fs::path before, after, truth, out;
  int rank = -1;
};

int cmd_transitions(const TransitionsArgs& a) {
  const std::map<std::string, txd::RankedPath> truth = load_label_map(a.truth);
  const std::size_t rank = pick_rank(truth, a.rank);

  auto statuses = [&](const fs::path& path) {
    std::ifstream in = open_input(path);
    std::map<std::string, txd::Status> out;
    for (const txd::Prediction& p : txd::read_predictions_tsv(in)) {
      auto it = truth.find(p.contig_id);
      if (it == truth.end())
        throw std::runtime_error("transitions: no ground truth for contig " + p.contig_id);
      out[p.contig_id] = txd::status_at_rank(p.path, it->second, rank);
    }
    return out;
  };

  const txd::TransitionMatrix m = txd::transitions(statuses(a.before), statuses(a.after));

  OutputGuard guard;
  std::ofstream out = open_output(a.out, guard);
  txd::write_transitions_tsv(out, m);
  out.close();
  guard.disarm();
  return 0;
}

struct KernelArgs {
  fs::path out;
};

int cmd_kernel(const KernelArgs& a) {
  const txd::TnfKernel kernel = txd::build_tnf_kernel();
  OutputGuard guard;
  std::ofstream out = open_output(a.out, guard);
  char buf[32];
  for (std::size_t w = 0; w < 256; ++w) {
    for (std::size_t c = 0; c < kernel.dim; ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", kernel.at(w, c));
      out << (c ? "\t" : "") << buf;
    }
    out << '\n';
  }
  if (!out) throw std::runtime_error("kernel: write failed");
  out.close();
  guard.disarm();
  std::cout << "tnf kernel dimension: " << kernel.dim << " (constraints: " << kernel.constraint_rows
            << ", threshold: " << kernel.sv_threshold << ")\n";
  return 0;
}

struct SimulateArgs {
  txd::SimConfig config;
  fs::path out_dir;
};

int cmd_simulate(const SimulateArgs& a) {
  const txd::SimData data = txd::simulate(a.config);
  txd::write_simulation(a.out_dir, a.config, data);
  std::cerr << "[txd] simulated " << data.records.size() << " contigs from " << a.config.n_species
            << " species into " << a.out_dir.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"txd: taxonomic pseudo-label correction via teacher-student distillation"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read defaults from a key=value file (flags win)");
  app.get_config_formatter_base()->valueSeparator('=');

  std::string kernels_flag = "auto";
  app.add_option("--kernels", kernels_flag, "Arithmetic backend: auto, scalar, avx2")
      ->capture_default_str();

  FeaturizeArgs feat;
  auto* featurize = app.add_subcommand("featurize", "Build the student feature cache from FASTA + abundances");
  featurize->add_option("--fasta", feat.fasta, "Contig FASTA")->required()->check(CLI::ExistingFile);
  featurize->add_option("--abundances", feat.abundances, "Abundance TSV (contig_id, K samples)")
      ->required()
      ->check(CLI::ExistingFile);
  featurize->add_option("--out", feat.out, "Output feature cache (.txdf)")->required();
  featurize->add_option("--min-length", feat.min_length, "Minimum contig length in bp")->capture_default_str();
  featurize->add_option("--max-length", feat.max_length, "Maximum contig length in bp (0 = unbounded)")
      ->capture_default_str();
  featurize->add_option("--threads", feat.threads, "Worker threads")->capture_default_str();
  featurize->add_flag("--tnf-zscore,!--no-tnf-zscore", feat.zscore_tnf,
                      "Standardize TNF columns over the dataset (default on)");

  TrainArgs tr;
  auto* train = app.add_subcommand("train", "Jointly train the teacher head and the student");
  train->add_option("--features", tr.features, "Feature cache (.txdf)")->required()->check(CLI::ExistingFile);
  train->add_option("--labels", tr.labels, "Pseudo-label TSV (contig_id, path)")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--out-dir", tr.out_dir, "Output directory")->required();
  fs::path fasta_opt, emb_opt;
  auto* fasta_flag = train->add_option("--fasta", fasta_opt, "Contig FASTA (needed for the built-in embedder)")
                         ->check(CLI::ExistingFile);
  auto* emb_flag = train->add_option("--embeddings", emb_opt, "Embedding file (.txde or TSV) from an external model")
                       ->check(CLI::ExistingFile);
  train->add_option("--alpha", tr.config.alpha, "Weight on the student's hard-label loss")->capture_default_str();
  train->add_option("--tau", tr.config.tau, "Distillation temperature")->capture_default_str();
  train->add_option("--epochs", tr.config.epochs, "Training epochs")->capture_default_str();
  train->add_option("--batch-size", tr.config.batch_size, "Batch size")->capture_default_str();
  train->add_option("--lr-student", tr.config.lr_student, "Student learning rate")->capture_default_str();
  train->add_option("--lr-teacher", tr.config.lr_teacher, "Teacher head learning rate")->capture_default_str();
  train->add_option("--weight-decay", tr.config.weight_decay, "Decoupled weight decay")->capture_default_str();
  train->add_option("--seed", tr.config.seed, "Master seed")->capture_default_str();
  train->add_option("--student-hidden", tr.config.student_hidden, "Student hidden layer widths")
      ->capture_default_str();
  train->add_option("--teacher-hidden", tr.config.teacher_hidden, "Teacher head hidden layer widths")
      ->capture_default_str();
  std::uint64_t student_init_seed = 0;
  auto* sis_flag = train->add_option("--student-init-seed", student_init_seed,
                                     "Override the derived student weight seed");
  train->add_option("--checkpoint-every", tr.config.checkpoint_every,
                    "Also write a checkpoint every k epochs (0 = final only)")
      ->capture_default_str();
  train->add_flag("--deterministic,!--no-deterministic", tr.config.deterministic,
                  "Keep every stage bit-reproducible for a fixed seed (default on)");
  train->add_option("--embed-dim", tr.embed_dim, "Built-in embedder output width")->capture_default_str();
  train->add_option("--embed-seed", tr.embed_seed, "Built-in embedder projection seed")->capture_default_str();
  train->add_option("--threads", tr.threads, "Worker threads for embedding extraction")->capture_default_str();

  PredictArgs pr;
  auto* predict = app.add_subcommand("predict", "Decode corrected labels from a checkpoint");
  predict->add_option("--checkpoint", pr.checkpoint, "Checkpoint (.txdm)")->required()->check(CLI::ExistingFile);
  predict->add_option("--features", pr.features, "Feature cache (.txdf)")->required()->check(CLI::ExistingFile);
  predict->add_option("--out", pr.out, "Predictions TSV")->required();
  predict->add_option("--threads", pr.threads, "Worker threads")->capture_default_str();

  EvalArgs ev;
  auto* eval = app.add_subcommand("eval", "Score predictions against ground truth");
  eval->add_option("--predictions", ev.predictions, "Predictions TSV")->required()->check(CLI::ExistingFile);
  eval->add_option("--truth", ev.truth, "Ground-truth TSV (contig_id, path)")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", ev.out, "Metrics TSV")->required();
  eval->add_option("--rank", ev.rank, "Evaluation rank, 0-based (-1 = deepest in truth)")->capture_default_str();

  TransitionsArgs trx;
  auto* transitions = app.add_subcommand("transitions", "Before/after label transition matrix");
  transitions->add_option("--before", trx.before, "Label or prediction TSV before correction")
      ->required()
      ->check(CLI::ExistingFile);
  transitions->add_option("--after", trx.after, "Label or prediction TSV after correction")
      ->required()
      ->check(CLI::ExistingFile);
  transitions->add_option("--truth", trx.truth, "Ground-truth TSV")->required()->check(CLI::ExistingFile);
  transitions->add_option("--out", trx.out, "Transition matrix TSV")->required();
  transitions->add_option("--rank", trx.rank, "Evaluation rank, 0-based (-1 = deepest in truth)")
      ->capture_default_str();

  KernelArgs kn;
  auto* kernel = app.add_subcommand("kernel", "Dump the TNF projection basis and report its dimension");
  kernel->add_option("--out", kn.out, "Basis TSV (256 rows x D columns)")->required();

  SimulateArgs sim;
  auto* simulate = app.add_subcommand("simulate", "Generate a synthetic labeled metagenome with label noise");
  simulate->add_option("--out-dir", sim.out_dir, "Output directory")->required();
  simulate->add_option("--tree-shape", sim.config.tree_shape, "Branching factors per rank")->capture_default_str();
  simulate->add_option("--n-species", sim.config.n_species, "Species count (= product of tree shape)")
      ->capture_default_str();
  simulate->add_option("--n-contigs", sim.config.n_contigs, "Contig count")->capture_default_str();
  simulate->add_option("--min-length", sim.config.length_range.first, "Minimum contig length")->capture_default_str();
  simulate->add_option("--max-length", sim.config.length_range.second, "Maximum contig length")->capture_default_str();
  simulate->add_option("--n-samples", sim.config.n_samples, "Number of abundance samples (K)")->capture_default_str();
  simulate->add_option("--markov-order", sim.config.markov_order, "Genome Markov chain order")->capture_default_str();
  simulate->add_option("--p-wrong", sim.config.p_wrong, "Fraction relabeled to another species")->capture_default_str();
  simulate->add_option("--p-drop", sim.config.p_drop, "Fraction truncated to an ancestor or unassigned")
      ->capture_default_str();
  simulate->add_flag("--siblings-only", sim.config.siblings_only, "Wrong labels pick sibling species only");
  simulate->add_option("--seed", sim.config.seed, "Simulation seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (!txd::kernels::select(kernels_flag))
      throw txd::ValidationError("unknown or unsupported --kernels backend: " + kernels_flag);
    if (*sis_flag) tr.config.student_init_seed = student_init_seed;
    if (*fasta_flag) tr.fasta = fasta_opt;
    if (*emb_flag) tr.embeddings = emb_opt;

    if (*featurize) return cmd_featurize(feat);
    if (*train) return cmd_train(tr);
    if (*predict) return cmd_predict(pr);
    if (*eval) return cmd_eval(ev);
    if (*transitions) return cmd_transitions(trx);
    if (*kernel) return cmd_kernel(kn);
    if (*simulate) return cmd_simulate(sim);
  } catch (const txd::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
