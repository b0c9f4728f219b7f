// Copyright 2026 The mdlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "mdlab/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>

#include "CLI11.hpp"
#include "mdlab/analysis.hpp"
#include "mdlab/corpus.hpp"
#include "mdlab/decoding.hpp"
#include "mdlab/denoiser.hpp"
#include "mdlab/error.hpp"
#include "mdlab/neural.hpp"
#include "mdlab/schedule.hpp"
#include "mdlab/training.hpp"

namespace fs = std::filesystem;

namespace mdlab {

namespace {

fs::path resolve_out(const std::string& path) {
  fs::path p(path);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutRootEnv); root && *root) return fs::path(root) / p;
  return p;
}

std::ofstream open_output(const fs::path& path) {
  if (fs::is_directory(path))
    throw ConfigError(fmt::format("output path '{}' is a directory", path.string()));
  if (path.has_parent_path() && !fs::exists(path.parent_path()))
    fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError(fmt::format("cannot write '{}'", path.string()));
  return out;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(fmt::format("cannot read '{}'", path));
  return in;
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_output(path);
  out << text;
}

std::string toml_quote(const std::string& v) {
  std::string q = "\"";
  for (char c : v) {
    if (c == '"' || c == '\\') q += '\\';
    q += c;
  }
  return q + '"';
}

// Deepest parsed subcommand and the dotted section naming it.
std::pair<const CLI::App*, std::string> leaf_command(const CLI::App& app) {
  const CLI::App* cur = &app;
  std::string section;
  for (bool descended = true; descended;) {
    descended = false;
    for (const CLI::App* sub : cur->get_subcommands()) {
      section += (section.empty() ? "" : ".") + sub->get_name();
      cur = sub;
      descended = true;
      break;
    }
  }
  return {cur, section};
}

// Resolved options of the invoked command only, so a rerun through --config
// triggers exactly that command.
void write_manifest(const CLI::App& app, const fs::path& path) {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::string text = fmt::format("# mdlab manifest, written {:%Y-%m-%dT%H:%M:%SZ}\n", fmt::gmtime(now));
  text += "# rerun with: mdlab --config <this file>\n";
  const auto [leaf, section] = leaf_command(app);
  text += fmt::format("[{}]\n", section);
  for (const CLI::Option* opt : leaf->get_options()) {
    if (opt->get_lnames().empty() || opt->get_lnames().front() == "help") continue;
    const std::string& name = opt->get_lnames().front();
    std::vector<std::string> values = opt->count() > 0 ? opt->reduced_results() : std::vector<std::string>{};
    if (opt->count() == 0) {
      if (opt->get_default_str().empty() || opt->get_default_str() == "{}") continue;
      values = {opt->get_default_str()};
    }
    if (opt->get_type_size_max() > 1 || opt->get_expected_max() > 1) {
      std::string arr;
      for (const auto& v : values) arr += (arr.empty() ? "" : ",") + toml_quote(v);
      text += fmt::format("{}=[{}]\n", name, arr);
    } else {
      text += fmt::format("{}={}\n", name, toml_quote(values.empty() ? std::string() : values.back()));
    }
  }
  write_text(path, text);
}

fs::path sidecar_manifest(const fs::path& out) {
  return fs::path(out.string() + ".manifest.toml");
}

// ---------------------------------------------------------------------------
// Corpus sources shared by several commands.

struct CorpusSource {
  std::string path;
  bool toy = false;
  bool chain = false;
  int states = 8;
  double s = 1.05;
  std::int64_t N = 150000;
  std::string rule = "cyclic";
  std::uint64_t rule_seed = 0;
  std::size_t length = 6;
  std::uint64_t budget = EnumerationOptions{}.budget;
  std::uint64_t top_k = 0;

  bool any() const { return !path.empty() || toy || chain; }
};

void add_corpus_source(CLI::App* cmd, CorpusSource& src) {
  auto* path = cmd->add_option("--corpus", src.path, "Corpus file");
  auto* toy = cmd->add_flag("--toy", src.toy, "Use the built-in toy corpus");
  auto* chain = cmd->add_flag("--chain", src.chain, "Enumerate a Zipf Markov-chain corpus");
  toy->excludes(path)->excludes(chain);
  chain->excludes(path);
  cmd->add_option("--states", src.states, "Chain state count");
  cmd->add_option("--s", src.s, "Zipf exponent");
  cmd->add_option("--N", src.N, "Zipf support size");
  cmd->add_option("--rule", src.rule, "Row permutation rule (cyclic|random)");
  cmd->add_option("--rule-seed", src.rule_seed, "Seed of the random permutation rule");
  cmd->add_option("--len", src.length, "Chain sequence length");
  cmd->add_option("--budget", src.budget, "Maximum number of enumerated paths");
  cmd->add_option("--top-k", src.top_k, "Keep only the k most probable paths (0 = all)");
}

std::optional<MarkovChainSpec> chain_spec(const CorpusSource& src) {
  if (!src.chain) return std::nullopt;
  return make_zipf_chain_spec(src.states, src.s, src.N, parse_permutation_rule(src.rule),
                              src.rule_seed);
}

Corpus load_corpus(const CorpusSource& src, bool default_toy) {
  if (!src.path.empty()) {
    auto in = open_input(src.path);
    return read_corpus(in);
  }
  if (src.chain) {
    EnumerationOptions opts;
    opts.budget = src.budget;
    if (src.top_k > 0) opts.top_k = src.top_k;
    return build_zipf_chain_corpus(*chain_spec(src), src.length, opts);
  }
  if (src.toy || default_toy) return build_toy_corpus();
  throw ConfigError("a corpus is required (--corpus, --toy or --chain)");
}

std::vector<TokenId> parse_prompt(const std::string& text, const Vocab& vocab) {
  std::vector<TokenId> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) {
    if (tok == "_" || tok == "[M]" || tok == "[MASK]") {
      out.push_back(vocab.mask_id());
      continue;
    }
    const auto id = vocab.find(tok);
    if (!id) throw ConfigError(fmt::format("unknown prompt token '{}'", tok));
    out.push_back(*id);
  }
  return out;
}

std::string format_sequence(std::span<const TokenId> seq, const Vocab& vocab) {
  std::string s;
  for (std::size_t j = 0; j < seq.size(); ++j) {
    if (j) s += ' ';
    s += seq[j] == vocab.mask_id() ? std::string("_") : vocab.name(seq[j]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// Option bundles

struct TrainOptions {
  CorpusSource source;
  std::string regime = "standard";
  int block = 4;
  std::string patterns = "sample";
  int steps = 5000;
  int batch = 32;
  double lr = 1e-3;
  double ema = TrainConfig{}.ema_decay;
  std::string optimizer = "adam";
  double t_epsilon = 1e-3;
  std::string schedule = "linear";
  std::uint64_t seed = 0;
  int d_model = 32;
  int layers = 2;
  int heads = 2;
  int d_ff = 64;
  std::uint64_t param_seed = 0;
  std::string out = "run";
};

struct DecodeOptions {
  CorpusSource source;
  std::string model;
  std::string oracle;
  std::string prompt;
  std::string strategy = "confidence";
  int k = 2;
  int block = 4;
  std::string inner = "confidence";
  std::string align = "leftmost";
  double rho = 0.1;
  int rounds = 5;
  int commits_per_round = 1;
  double temperature = 0.0;
  std::string stop_on_eot = "auto";
  std::size_t max_positions = 0;
  bool compare_semi_ar = false;
  std::uint64_t seed = 0;
  std::string out = "trace.jsonl";
};

struct AnalyzeZipf {
  double s = 1.05;
  std::int64_t N = 150000;
};

struct ProfileOptions {
  CorpusSource source;
  std::string model;
  int prompts = 100;
  std::size_t prompt_length = 0;
  std::uint64_t seed = 0;
  double bound_s = 0.0;
  std::int64_t bound_N = 0;
  std::string out = "profile.csv";
};

struct HomogenizationOptions {
  CorpusSource source;
  std::string model;
  std::string prompt;
  int prompts = 100;
  std::size_t prompt_length = 1;
  std::uint64_t seed = 0;
  std::string out = "homogenization.csv";
};

std::unique_ptr<Denoiser> make_denoiser(const std::string& model, const CorpusSource& src,
                                        std::shared_ptr<const Corpus>* corpus_out) {
  if (!model.empty()) return std::make_unique<NeuralDenoiser>(NeuralDenoiser::load(fs::path(model)));
  auto corpus = std::make_shared<const Corpus>(load_corpus(src, true));
  if (corpus_out) *corpus_out = corpus;
  return std::make_unique<TabularDenoiser>(corpus);
}

// ---------------------------------------------------------------------------
// Commands

void cmd_corpus(const CorpusSource& src, const std::string& out_path, const CLI::App& app,
                std::ostream& out) {
  if (!src.any()) throw ConfigError("corpus needs --toy, --chain or --corpus");
  const Corpus corpus = load_corpus(src, false);
  const fs::path path = resolve_out(out_path);
  {
    auto f = open_output(path);
    write_corpus(f, corpus);
  }
  write_manifest(app, sidecar_manifest(path));
  out << fmt::format("wrote {} entries of length {}{} to {}\n", corpus.size(), corpus.length(),
                     corpus.truncated() ? " (top-k truncated)" : "", path.string());
}

void cmd_train(const TrainOptions& o, const CLI::App& app, std::ostream& out) {
  const Corpus corpus = load_corpus(o.source, true);
  TrainConfig cfg;
  cfg.batch_size = o.batch;
  cfg.steps = o.steps;
  cfg.learning_rate = o.lr;
  cfg.ema_decay = o.ema;
  if (o.optimizer == "sgd") cfg.optimizer.kind = OptimizerKind::kSgd;
  else if (o.optimizer != "adam") throw ConfigError(fmt::format("unknown optimizer '{}'", o.optimizer));
  cfg.t_epsilon = o.t_epsilon;
  cfg.seed = o.seed;
  cfg.regime = parse_regime(o.regime);
  cfg.block_size = o.block;
  if (o.patterns == "enumerate") cfg.pattern_mode = PatternMode::kEnumerate;
  else if (o.patterns != "sample") throw ConfigError(fmt::format("unknown pattern mode '{}'", o.patterns));
  cfg.validate();

  NeuralDenoiserConfig mc;
  mc.d_model = o.d_model;
  mc.n_layers = o.layers;
  mc.n_heads = o.heads;
  mc.d_ff = o.d_ff;
  mc.param_seed = o.param_seed;
  mc.max_len = static_cast<int>(corpus.length());
  mc.validate();

  const Schedule schedule = Schedule::from_name(o.schedule);
  const fs::path dir = resolve_out(o.out);
  if (fs::exists(dir) && !fs::is_directory(dir))
    throw ConfigError(fmt::format("output '{}' exists and is not a directory", dir.string()));
  fs::create_directories(dir);

  const TrainResult result = train(corpus, cfg, schedule, mc);
  result.model.save(dir / "model.ckpt");
  {
    auto f = open_output(dir / "loss.csv");
    write_loss_csv(f, result.trace, result.regime);
  }
  std::string summary = fmt::format("regime {}\nsteps {}\nfinal_loss {:.6f}\nclamped_probabilities {}\n",
                                    to_string(result.regime), result.trace.size(),
                                    result.trace.empty() ? 0.0 : result.trace.back().loss,
                                    result.clamped_probabilities);
  if (result.coverage) {
    const auto& cov = *result.coverage;
    for (const auto& [begin, seen] : cov.patterns) {
      const std::size_t size = std::min<std::size_t>(static_cast<std::size_t>(cov.block_size),
                                                     corpus.length() - begin);
      summary += fmt::format("block {} size {}: {} patterns of {}\n", begin, size, seen.size(),
                             (1u << size) - 1u);
    }
  }
  write_text(dir / "summary.txt", summary);
  write_manifest(app, dir / "manifest.toml");
  out << summary;
}

DecodePolicy decode_policy(const DecodeOptions& o) {
  DecodePolicy p;
  p.strategy = parse_strategy(o.strategy);
  p.k = o.k;
  p.block = o.block;
  p.inner = parse_strategy(o.inner);
  if (o.align == "partition") p.alignment = BlockAlignment::kReversePartition;
  else if (o.align != "leftmost") throw ConfigError(fmt::format("unknown block alignment '{}'", o.align));
  p.rho = o.rho;
  p.rounds = o.rounds;
  p.commits_per_round = o.commits_per_round;
  if (o.temperature > 0.0) p.selection = {false, o.temperature};
  else if (o.temperature < 0.0) throw ConfigError("temperature must be positive");
  if (o.stop_on_eot == "auto") p.stop_on_eot = p.strategy == Strategy::kSemiAr;
  else if (o.stop_on_eot == "on") p.stop_on_eot = true;
  else if (o.stop_on_eot == "off") p.stop_on_eot = false;
  else throw ConfigError(fmt::format("--stop-on-eot takes auto, on or off (got '{}')", o.stop_on_eot));
  if (o.max_positions > 0) p.max_positions = o.max_positions;
  p.validate();
  return p;
}

void cmd_decode(const DecodeOptions& o, const CLI::App& app, std::ostream& out) {
  std::shared_ptr<const Corpus> corpus;
  const auto denoiser = make_denoiser(o.model, o.source, &corpus);
  if (!o.oracle.empty()) {
    auto in = open_input(o.oracle);
    corpus = std::make_shared<const Corpus>(read_corpus(in));
  }
  const Vocab& vocab = denoiser->vocab();
  std::vector<TokenId> prompt;
  if (!o.prompt.empty()) {
    prompt = parse_prompt(o.prompt, vocab);
  } else if (o.model.empty() && !o.source.chain && o.source.path.empty()) {
    prompt = parse_prompt("_ _ C D _", vocab);
  } else {
    prompt.assign(denoiser->max_length(), vocab.mask_id());
  }

  const DecodePolicy policy = decode_policy(o);
  const DecodeTrace trace = decode(*denoiser, prompt, policy, o.seed);
  std::optional<TraceReport> report;
  if (corpus) report = annotate_trace(*corpus, trace);

  const fs::path path = resolve_out(o.out);
  {
    auto f = open_output(path);
    write_trace_jsonl(f, trace, vocab, report ? &*report : nullptr);
  }
  out << fmt::format("{} -> {}\n", format_sequence(prompt, vocab),
                     format_sequence(trace.final_sequence, vocab));
  if (report) {
    out << fmt::format("joint {:.6f} best {:.6f}{}\n", report->joint, report->best_joint,
                       report->suboptimal ? " SUBOPTIMAL" : "");
    for (const auto& s : report->steps)
      if (s.suboptimal)
        out << fmt::format("step {}: joint {:.6f} < best {:.6f}\n", s.step, s.joint, s.best_joint);
  }

  if (o.compare_semi_ar) {
    DecodePolicy ar = policy;
    ar.strategy = Strategy::kArOrder;
    DecodePolicy semi = policy;
    semi.strategy = Strategy::kSemiAr;
    semi.block = 1;
    const auto a = decode(*denoiser, prompt, ar, o.seed);
    const auto b = decode(*denoiser, prompt, semi, o.seed);
    const bool same = a.final_sequence == b.final_sequence;
    const std::string cmp =
        fmt::format("ar_order {}\nsemi_ar_b1 {}\nidentical {}\n", format_sequence(a.final_sequence, vocab),
                    format_sequence(b.final_sequence, vocab), same ? "yes" : "no");
    write_text(fs::path(path.string() + ".compare.txt"), cmp);
    out << cmp;
  }
  write_manifest(app, sidecar_manifest(path));
}

void emit_csv(const std::string& out_path, const std::string& csv, const CLI::App& app,
              std::ostream& out) {
  const fs::path path = resolve_out(out_path);
  write_text(path, csv);
  write_manifest(app, sidecar_manifest(path));
  out << csv;
}

void cmd_ppl_table(const AnalyzeZipf& z, int max, const std::string& out_path, const CLI::App& app,
                   std::ostream& out) {
  const auto rows = ppl_table(zipf_top_probs(z.s, z.N), max);
  std::ostringstream csv;
  write_ppl_csv(csv, rows);
  emit_csv(out_path, csv.str(), app, out);
}

void cmd_bound(const AnalyzeZipf& z, int n, const std::string& out_path, const CLI::App& app,
               std::ostream& out) {
  std::ostringstream csv;
  write_bound_csv(csv, bound_curve(zipf_top_probs(z.s, z.N), n));
  emit_csv(out_path, csv.str(), app, out);
}

void cmd_profile(const ProfileOptions& o, const CLI::App& app, std::ostream& out) {
  std::shared_ptr<const Corpus> corpus;
  const auto denoiser = make_denoiser(o.model, o.source, &corpus);
  std::vector<std::vector<TokenId>> prompts;
  if (corpus && o.prompt_length > 0) {
    prompts = prompt_battery(*corpus, o.prompts, o.prompt_length, o.seed);
  } else {
    prompts.assign(1, std::vector<TokenId>(denoiser->max_length(), denoiser->vocab().mask_id()));
  }
  const auto profile = max_prob_profile(*denoiser, prompts);

  std::optional<ZipfParams> params;
  if (o.bound_s > 0.0) {
    params = zipf_top_probs(o.bound_s, o.bound_N > 0 ? o.bound_N : 150000);
  } else if (const auto spec = chain_spec(o.source)) {
    params = chain_zipf_params(*spec);
  }
  std::ostringstream csv;
  write_profile_csv(csv, profile, params ? &*params : nullptr);
  emit_csv(o.out, csv.str(), app, out);
}

void cmd_homogenization(const HomogenizationOptions& o, const CLI::App& app, std::ostream& out) {
  std::shared_ptr<const Corpus> corpus;
  const auto denoiser = make_denoiser(o.model, o.source, &corpus);
  std::vector<std::vector<TokenId>> prompts;
  if (!o.prompt.empty()) {
    prompts.push_back(parse_prompt(o.prompt, denoiser->vocab()));
  } else if (corpus) {
    prompts = prompt_battery(*corpus, o.prompts, o.prompt_length, o.seed);
  } else {
    prompts.assign(1, std::vector<TokenId>(denoiser->max_length(), denoiser->vocab().mask_id()));
  }
  const auto summary = homogenization_summary(*denoiser, prompts);
  std::ostringstream csv;
  write_homogenization_csv(csv, summary.distances, summary.collapse_fraction);
  emit_csv(o.out, csv.str(), app, out);
  if (prompts.size() == 1) {
    const auto h = homogenization_score(*denoiser, prompts.front());
    out << fmt::format("argmax {}\n", format_sequence(h.argmax, denoiser->vocab()));
  }
  out << fmt::format("mean_longest_run {:.6f}\n", summary.mean_longest_run);
}

void cmd_metrics(const std::vector<double>& p, const std::string& out_path, const CLI::App& app,
                 std::ostream& out) {
  const ParallelMetrics m = parallel_metrics(p);
  emit_csv(out_path, fmt::format("m1,m2,m3\n{:.6f},{:.6f},{:.6f}\n", m.m1, m.m2, m.m3), app, out);
}

void cmd_reproduce_toy(const std::string& out_dir, const CLI::App& app, std::ostream& out) {
  auto corpus = std::make_shared<const Corpus>(build_toy_corpus());
  const TabularDenoiser denoiser(corpus);
  const Vocab& vocab = corpus->vocab();
  const auto prompt = parse_prompt("_ _ C D _", vocab);
  const fs::path dir = resolve_out(out_dir);
  fs::create_directories(dir);

  std::ostringstream marg;
  marg << "position,token,probability\n";
  for (const auto& [pos, row] : oracle_conditional_marginals(*corpus, prompt))
    for (std::size_t v = 0; v < row.size(); ++v)
      if (row[v] > 0.0 && pos < 2)
        marg << fmt::format("{},{},{:.6f}\n", pos + 1, vocab.name(static_cast<TokenId>(v)), row[v]);
  write_text(dir / "marginals.csv", marg.str());
  out << marg.str();

  const std::pair<const char*, DecodePolicy> runs[] = {
      {"ar_order", [] { DecodePolicy p; p.strategy = Strategy::kArOrder; return p; }()},
      {"confidence", DecodePolicy{}},
      {"parallel_k2", [] { DecodePolicy p; p.strategy = Strategy::kParallelK; p.k = 2; return p; }()},
  };
  for (const auto& [name, policy] : runs) {
    const DecodeTrace trace = decode(denoiser, prompt, policy, 0);
    const TraceReport report = annotate_trace(*corpus, trace);
    auto f = open_output(dir / fmt::format("{}.jsonl", name));
    write_trace_jsonl(f, trace, vocab, &report);
    const auto& first = report.steps.front();
    out << fmt::format("{}: {} first-step joint {:.6f} best {:.6f}{}\n", name,
                       format_sequence(trace.final_sequence, vocab), first.joint, first.best_joint,
                       first.suboptimal ? " SUBOPTIMAL" : "");
  }
  write_manifest(app, dir / "manifest.toml");
}

int report_error(std::ostream& err, const char* what, int code) {
  err << "mdlab: " << what << '\n';
  return code;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Masked diffusion language model laboratory"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "Read options from a manifest or TOML file");
  app.require_subcommand(1);

  // corpus
  CorpusSource corpus_src;
  std::string corpus_out = "corpus.txt";
  auto* corpus_cmd = app.add_subcommand("corpus", "Build a toy or Zipf-chain corpus file")->configurable();
  add_corpus_source(corpus_cmd, corpus_src);
  corpus_cmd->add_option("--out", corpus_out, "Output corpus file");

  // train
  TrainOptions train_opts;
  auto* train_cmd = app.add_subcommand("train", "Train a neural denoiser")->configurable();
  add_corpus_source(train_cmd, train_opts.source);
  train_cmd->add_option("--regime", train_opts.regime, "standard | blockwise");
  train_cmd->add_option("--block", train_opts.block, "Block size of the blockwise regime");
  train_cmd->add_option("--patterns", train_opts.patterns, "Blockwise mask patterns: sample | enumerate");
  train_cmd->add_option("--steps", train_opts.steps, "Optimizer steps");
  train_cmd->add_option("--batch", train_opts.batch, "Sequences per step");
  train_cmd->add_option("--lr", train_opts.lr, "Learning rate");
  train_cmd->add_option("--ema", train_opts.ema, "Parameter EMA decay of the saved model (0 = last iterate)");
  train_cmd->add_option("--optimizer", train_opts.optimizer, "adam | sgd");
  train_cmd->add_option("--t-epsilon", train_opts.t_epsilon, "Lower end of the sampled time range");
  train_cmd->add_option("--schedule", train_opts.schedule, "linear | cosine | table:<path>");
  train_cmd->add_option("--seed", train_opts.seed, "Data seed");
  train_cmd->add_option("--d-model", train_opts.d_model, "Model width");
  train_cmd->add_option("--layers", train_opts.layers, "Transformer blocks");
  train_cmd->add_option("--heads", train_opts.heads, "Attention heads");
  train_cmd->add_option("--d-ff", train_opts.d_ff, "Feed-forward width");
  train_cmd->add_option("--param-seed", train_opts.param_seed, "Initialization seed");
  train_cmd->add_option("--out", train_opts.out, "Output directory");

  // decode
  DecodeOptions dec;
  auto* decode_cmd = app.add_subcommand("decode", "Generate from a prompt and write a JSONL trace")->configurable();
  add_corpus_source(decode_cmd, dec.source);
  decode_cmd->add_option("--model", dec.model, "Neural checkpoint (default: tabular denoiser of the corpus)");
  decode_cmd->add_option("--oracle", dec.oracle, "Corpus file used to annotate joint probabilities");
  decode_cmd->add_option("--prompt", dec.prompt, "Space-separated tokens, '_' for MASK");
  decode_cmd->add_option("--strategy", dec.strategy,
                         "confidence | ar_order | reverse_order | random_order | parallel_k | semi_ar | random_init");
  decode_cmd->add_option("--k", dec.k, "Positions per step for parallel_k");
  decode_cmd->add_option("--block", dec.block, "Block size for semi_ar");
  decode_cmd->add_option("--inner", dec.inner, "Policy inside a semi_ar block");
  decode_cmd->add_option("--align", dec.align, "semi_ar block placement: leftmost | partition");
  decode_cmd->add_option("--rho", dec.rho, "random_init fill ratio");
  decode_cmd->add_option("--rounds", dec.rounds, "random_init rounds");
  decode_cmd->add_option("--commits-per-round", dec.commits_per_round, "random_init commits per round");
  decode_cmd->add_option("--temperature", dec.temperature, "Sampling temperature (0 = greedy)");
  decode_cmd->add_option("--stop-on-eot", dec.stop_on_eot, "auto | on | off");
  decode_cmd->add_option("--max-positions", dec.max_positions, "Stop after this many commits (0 = all)");
  decode_cmd->add_flag("--compare-semi-ar", dec.compare_semi_ar, "Also compare ar_order with semi_ar B=1");
  decode_cmd->add_option("--seed", dec.seed, "Decoding seed");
  decode_cmd->add_option("--out", dec.out, "Output JSONL file");

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Bounds, perplexity tables and denoiser probes")->configurable();
  analyze_cmd->require_subcommand(1);

  AnalyzeZipf ppl_zipf;
  int ppl_max = 8;
  std::string ppl_out = "ppl_table.csv";
  auto* ppl_cmd = analyze_cmd->add_subcommand("ppl-table", "Perplexity of k parallel samples under the bound")->configurable();
  ppl_cmd->add_option("--s", ppl_zipf.s, "Zipf exponent");
  ppl_cmd->add_option("--N", ppl_zipf.N, "Zipf support size");
  ppl_cmd->add_option("--max", ppl_max, "Largest k");
  ppl_cmd->add_option("--out", ppl_out, "Output CSV");

  AnalyzeZipf bound_zipf{2.31, 130000};
  int bound_n = 128;
  std::string bound_out = "bound.csv";
  auto* bound_cmd = analyze_cmd->add_subcommand("bound", "Upper bound on the max marginal by position")->configurable();
  bound_cmd->add_option("--s", bound_zipf.s, "Zipf exponent");
  bound_cmd->add_option("--N", bound_zipf.N, "Zipf support size");
  bound_cmd->add_option("--n", bound_n, "Last position");
  bound_cmd->add_option("--out", bound_out, "Output CSV");

  ProfileOptions prof;
  auto* profile_cmd = analyze_cmd->add_subcommand("profile", "Mean max probability per position")->configurable();
  add_corpus_source(profile_cmd, prof.source);
  profile_cmd->add_option("--model", prof.model, "Neural checkpoint");
  profile_cmd->add_option("--prompts", prof.prompts, "Battery size");
  profile_cmd->add_option("--prompt-length", prof.prompt_length, "Observed prefix length (0 = empty prompt)");
  profile_cmd->add_option("--seed", prof.seed, "Battery seed");
  profile_cmd->add_option("--bound-s", prof.bound_s, "Overlay the bound for this Zipf exponent");
  profile_cmd->add_option("--bound-N", prof.bound_N, "Zipf support of the overlay");
  profile_cmd->add_option("--out", prof.out, "Output CSV");

  HomogenizationOptions homo;
  auto* homo_cmd = analyze_cmd->add_subcommand("homogenization", "Collapse of distant argmax predictions")->configurable();
  add_corpus_source(homo_cmd, homo.source);
  homo_cmd->add_option("--model", homo.model, "Neural checkpoint");
  homo_cmd->add_option("--prompt", homo.prompt, "Single prompt ('_' for MASK)");
  homo_cmd->add_option("--prompts", homo.prompts, "Battery size");
  homo_cmd->add_option("--prompt-length", homo.prompt_length, "Observed prefix length");
  homo_cmd->add_option("--seed", homo.seed, "Battery seed");
  homo_cmd->add_option("--out", homo.out, "Output CSV");

  std::vector<double> metric_p;
  std::string metrics_out = "metrics.csv";
  auto* metrics_cmd = analyze_cmd->add_subcommand("metrics", "Min, product and Bonferroni bound of marginals")->configurable();
  metrics_cmd->add_option("--p", metric_p, "Per-position max probabilities")->required()->delimiter(',');
  metrics_cmd->add_option("--out", metrics_out, "Output CSV");

  // reproduce
  auto* reproduce_cmd = app.add_subcommand("reproduce", "Bundled golden-path runs")->configurable();
  reproduce_cmd->require_subcommand(1);
  std::string toy_out = "toy";
  auto* toy_cmd = reproduce_cmd->add_subcommand("toy", "Toy corpus marginals and decoding traces")->configurable();
  toy_cmd->add_option("--out", toy_out, "Output directory");
  std::string table_out = "table2.csv";
  auto* table_cmd = reproduce_cmd->add_subcommand("table2", "Perplexity table at s=1.05, N=150000")->configurable();
  table_cmd->add_option("--out", table_out, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    return report_error(err, e.what(), 2);
  }

  try {
    if (corpus_cmd->parsed()) cmd_corpus(corpus_src, corpus_out, app, out);
    else if (train_cmd->parsed()) cmd_train(train_opts, app, out);
    else if (decode_cmd->parsed()) cmd_decode(dec, app, out);
    else if (ppl_cmd->parsed()) cmd_ppl_table(ppl_zipf, ppl_max, ppl_out, app, out);
    else if (bound_cmd->parsed()) cmd_bound(bound_zipf, bound_n, bound_out, app, out);
    else if (profile_cmd->parsed()) cmd_profile(prof, app, out);
    else if (homo_cmd->parsed()) cmd_homogenization(homo, app, out);
    else if (metrics_cmd->parsed()) cmd_metrics(metric_p, metrics_out, app, out);
    else if (toy_cmd->parsed()) cmd_reproduce_toy(toy_out, app, out);
    else if (table_cmd->parsed()) cmd_ppl_table({1.05, 150000}, 8, table_out, app, out);
  } catch (const Error& e) {
    return report_error(err, e.what(), e.exit_code());
  } catch (const fs::filesystem_error& e) {
    return report_error(err, e.what(), 2);
  }
  return 0;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"mdlab"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace mdlab
