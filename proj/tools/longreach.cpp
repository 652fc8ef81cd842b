#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "longreach/grad_check.hpp"
#include "longreach/grad_suite.hpp"
#include "longreach/model.hpp"
#include "longreach/tasks.hpp"
#include "longreach/training.hpp"

namespace {

using namespace longreach;

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

int run_gen(const std::string& variant, uint64_t seed, const std::string& out) {
  DatasetSplits splits = generate_splits(task_variant_from_string(variant), seed);
  write_splits(splits, out);
  std::cout << "wrote " << out << ": train=" << splits.train.size()
            << " interpolation=" << splits.interpolation.size();
  for (int k = 1; k <= 5; ++k)
    std::cout << " long" << k << "="
              << splits.longer[static_cast<size_t>(k - 1)].size();
  std::cout << "\n";
  return 0;
}

int run_train(const std::string& data, const std::string& attention,
              const std::string& mix_content, const TrainConfig& tcfg,
              float dropout, const std::string& out) {
  Vocab vocab;
  DatasetSplits splits = read_splits(data);

  ModelConfig mcfg;
  mcfg.attention = attention_kind_from_string(attention);
  mcfg.bottleneck_dropout = dropout;
  mcfg.seed = tcfg.seed;
  if (mix_content == "additive")
    mcfg.mix_content = ContentScorerKind::Additive;
  else if (mix_content == "multiplicative")
    mcfg.mix_content = ContentScorerKind::Multiplicative;
  else if (mix_content == "scaled_dot")
    mcfg.mix_content = ContentScorerKind::ScaledDot;
  else
    throw Error("unknown mix content scorer '" + mix_content + "'");

  Seq2SeqModel model(mcfg, vocab);
  TrainLog log = train_model(model, splits.train, vocab, tcfg);

  model.save(out);
  write_train_log(log, std::filesystem::path(out) / "train_log.jsonl");

  if (!log.epochs.empty()) {
    const EpochLog& last = log.epochs.back();
    std::cout << "epoch " << last.epoch << ": train_loss=" << last.train_loss;
    if (last.val_seq_acc >= 0) std::cout << " val_seq_acc=" << last.val_seq_acc;
    std::cout << "\n";
  }
  std::cout << "saved model to " << out << "\n";
  return 0;
}

int run_eval(const std::string& model_dir, const std::string& data,
             const std::string& splits_csv, bool reproduce,
             const std::string& out) {
  Vocab vocab;
  Seq2SeqModel model = Seq2SeqModel::load(model_dir, vocab);
  DatasetSplits splits = read_splits(data);

  std::vector<std::string> names = split_csv(splits_csv);
  if (names.empty()) throw Error("no splits requested");
  for (const std::string& name : names) split_by_name(splits, name);

  std::filesystem::create_directories(out);
  HullBounds hull = fit_state_hull(model, splits.train, vocab);

  std::vector<EvalReport> reports;
  for (const std::string& name : names) {
    EvalReport report =
        evaluate_split(model, split_by_name(splits, name), name, hull, vocab);
    std::ofstream os(std::filesystem::path(out) / ("eval_" + name + ".json"));
    if (!os) throw Error("cannot write eval report for " + name);
    os << report.to_json();
    std::cout << name << ": seq_acc=" << report.seq_acc
              << " seq_acc_be=" << report.seq_acc_be
              << " attn_loss=" << report.attn_loss << "\n";
    reports.push_back(std::move(report));
  }

  if (reproduce) {
    std::ostringstream csv;
    csv << "split,seq_acc,seq_acc_be,attn_loss,n_examples\n";
    for (const EvalReport& r : reports)
      csv << r.split << "," << r.seq_acc << "," << r.seq_acc_be << ","
          << r.attn_loss << "," << r.n_examples << "\n";
    std::ofstream os(std::filesystem::path(out) / "results.csv");
    if (!os) throw Error("cannot write results.csv");
    os << csv.str();
    std::cout << csv.str();
  }
  return 0;
}

nlohmann::ordered_json trace_json(const Vocab& vocab,
                                  const std::vector<std::string>& input,
                                  const GreedyResult& res) {
  nlohmann::ordered_json j;
  j["input"] = input;
  j["output"] = vocab.decode(res.tokens);
  j["emitted_eos"] = res.emitted_eos;
  nlohmann::ordered_json steps = nlohmann::ordered_json::array();
  for (size_t t = 0; t < res.steps.size(); ++t) {
    const StepDiagnostics& d = res.steps[t];
    nlohmann::ordered_json s;
    s["step"] = t;
    s["token"] = t < res.tokens.size()
                     ? vocab.token(res.tokens[t])
                     : (res.emitted_eos && t == res.steps.size() - 1
                            ? vocab.token(vocab.eos())
                            : "");
    s["alpha"] = d.alpha;
    if (d.gamma) s["gamma"] = *d.gamma;
    if (d.lambda) s["lambda"] = *d.lambda;
    if (d.mu) s["mu"] = *d.mu;
    if (d.sigma) s["sigma"] = *d.sigma;
    if (d.rho) s["rho"] = *d.rho;
    if (d.percent) s["lambda_percent"] = *d.percent;
    steps.push_back(std::move(s));
  }
  j["steps"] = std::move(steps);
  return j;
}

int run_inspect(const std::string& model_dir, const std::string& input,
                int max_len, const std::string& out) {
  Vocab vocab;
  Seq2SeqModel model = Seq2SeqModel::load(model_dir, vocab);
  std::vector<std::string> tokens = tokenize(input);
  if (tokens.empty()) throw Error("empty input");

  GreedyResult res = model.greedy_decode(vocab.encode(tokens), max_len);
  std::string text = trace_json(vocab, tokens, res).dump(2) + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    std::ofstream os(out);
    if (!os) throw Error("cannot write " + out);
    os << text;
    std::cout << "wrote " << out << "\n";
  }
  return 0;
}

int run_gradcheck(uint64_t seed) {
  bool ok = true;
  for (const GradSuiteResult& c : reference_grad_suite(seed)) {
    ok = ok && c.pass();
    std::cout << (c.pass() ? "pass" : "FAIL") << "  " << c.name
              << "  max_rel_err=" << c.worst << " (tol " << c.tol << ")\n";
  }
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lookup-table seq2seq: data generation, training, evaluation"};
  app.require_subcommand(1);

  std::string variant = "standard";
  std::string data, model_dir, out, input;
  std::string attention = "location";
  std::string mix_content = "scaled_dot";
  std::string splits = "interpolation,long1,long2,long3,long4,long5";
  bool reproduce = false;
  bool no_shuffle = false;
  int max_len = 64;
  float dropout = 0.5f;
  TrainConfig tcfg;

  auto* gen = app.add_subcommand("gen", "Generate dataset splits");
  gen->add_option("--variant", variant, "standard, reversed or noisy")
      ->check(CLI::IsMember({"standard", "reversed", "noisy"}));
  gen->add_option("--seed", tcfg.seed, "generation seed")
      ->envname("LONGREACH_SEED");
  gen->add_option("--out", out, "output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--data", data, "dataset directory")->required();
  train
      ->add_option("--attention", attention,
                   "additive, multiplicative, scaled_dot, transformer, "
                   "transformer_xl, location or mix")
      ->check(CLI::IsMember({"additive", "multiplicative", "scaled_dot",
                             "transformer", "transformer_xl", "location",
                             "mix"}));
  train
      ->add_option("--mix-content", mix_content,
                   "content scorer inside the mix attender")
      ->check(CLI::IsMember({"additive", "multiplicative", "scaled_dot"}));
  train->add_option("--epochs", tcfg.epochs, "training epochs");
  train->add_option("--batch-size", tcfg.batch_size, "minibatch size");
  train->add_option("--lr", tcfg.lr, "Adam learning rate");
  train->add_option("--dropout", dropout, "bottleneck dropout rate");
  train->add_option("--val-fraction", tcfg.validation_fraction,
                    "held-back validation fraction");
  train->add_flag("--no-shuffle", no_shuffle, "keep example order fixed");
  train->add_option("--seed", tcfg.seed, "training/init seed")
      ->envname("LONGREACH_SEED");
  train->add_option("--out", out, "model output directory")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a trained model");
  eval->add_option("--model", model_dir, "model directory")->required();
  eval->add_option("--data", data, "dataset directory")->required();
  eval->add_option("--splits", splits, "comma-separated split names");
  eval->add_flag("--reproduce", reproduce,
                 "also emit results.csv with one row per split");
  eval->add_option("--out", out, "report output directory")->required();

  auto* inspect = app.add_subcommand("inspect", "Decode one input with a trace");
  inspect->add_option("--model", model_dir, "model directory")->required();
  inspect->add_option("--input", input, "space-separated source tokens")
      ->required();
  inspect->add_option("--max-len", max_len, "decoding step cap");
  inspect->add_option("--out", out, "trace file (stdout if omitted)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Check gradients");
  gradcheck->add_option("--seed", tcfg.seed, "randomization seed")
      ->envname("LONGREACH_SEED");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (gen->parsed()) return run_gen(variant, tcfg.seed, out);
    if (train->parsed()) {
      tcfg.shuffle = !no_shuffle;
      return run_train(data, attention, mix_content, tcfg, dropout, out);
    }
    if (eval->parsed())
      return run_eval(model_dir, data, splits, reproduce, out);
    if (inspect->parsed()) return run_inspect(model_dir, input, max_len, out);
    if (gradcheck->parsed()) return run_gradcheck(tcfg.seed);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
