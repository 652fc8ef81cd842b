#include "longreach/training.hpp"

#include <json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>

#include "longreach/adam.hpp"

namespace longreach {

EncodedBatch encode_examples(std::span<const TaskExample* const> examples,
                             const Vocab& vocab) {
  EncodedBatch b;
  b.src.reserve(examples.size());
  b.tgt.reserve(examples.size());
  for (const TaskExample* ex : examples) {
    b.src.push_back(vocab.encode(ex->input_tokens));
    b.tgt.push_back(vocab.encode(ex->target_tokens));
  }
  return b;
}

int greedy_cap(const std::vector<TaskExample>& split) {
  size_t longest = 0;
  for (const TaskExample& ex : split)
    longest = std::max(longest, ex.target_tokens.size());
  return static_cast<int>(2 * longest + 5);
}

void write_train_log(const TrainLog& log, const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw Error("training: cannot write " + file.string());
  for (const EpochLog& e : log.epochs) {
    nlohmann::ordered_json j;
    j["epoch"] = e.epoch;
    j["train_loss"] = e.train_loss;
    if (e.val_seq_acc >= 0.0) j["val_seq_acc"] = e.val_seq_acc;
    j["seconds"] = e.seconds;
    os << j.dump() << "\n";
  }
}

namespace {

double greedy_seq_acc(Seq2SeqModel& model,
                      std::span<const TaskExample* const> examples,
                      const Vocab& vocab, int cap) {
  if (examples.empty()) return -1.0;
  size_t correct = 0;
  for (const TaskExample* ex : examples) {
    GreedyResult res = model.greedy_decode(vocab.encode(ex->input_tokens), cap);
    std::vector<int> pred = res.tokens;
    if (res.emitted_eos) pred.push_back(vocab.eos());
    if (seq_acc(pred, vocab.encode(ex->target_tokens), vocab.eos())) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

}  // namespace

TrainLog train_model(Seq2SeqModel& model, const std::vector<TaskExample>& train,
                     const Vocab& vocab, const TrainConfig& cfg) {
  if (train.empty()) throw Error("training: empty training split");
  if (cfg.epochs < 0 || cfg.batch_size <= 0)
    throw Error("training: bad epochs/batch size");
  if (!(cfg.validation_fraction >= 0.0f && cfg.validation_fraction < 1.0f))
    throw Error("training: validation fraction must be in [0,1)");

  size_t val_n = static_cast<size_t>(
      std::llround(static_cast<double>(cfg.validation_fraction) *
                   static_cast<double>(train.size())));
  size_t train_n = train.size() - val_n;
  if (train_n == 0) throw Error("training: validation slice leaves no data");

  std::vector<const TaskExample*> val_view;
  for (size_t i = train_n; i < train.size(); ++i) val_view.push_back(&train[i]);

  Rng root(cfg.seed);
  Rng shuffle_rng = root.substream("shuffle");
  Rng dropout_rng = root.substream("dropout");

  AdamConfig acfg;
  acfg.lr = cfg.lr;
  Adam adam(acfg);
  std::vector<Tensor> params = model.params().tensors();

  std::vector<size_t> order(train_n);
  for (size_t i = 0; i < train_n; ++i) order[i] = i;

  int cap = greedy_cap(train);
  TrainLog log;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    if (cfg.shuffle) shuffle_rng.shuffle(order);

    double loss_sum = 0.0, token_sum = 0.0;
    size_t batch_id = 0;
    for (size_t start = 0; start < train_n;
         start += static_cast<size_t>(cfg.batch_size), ++batch_id) {
      size_t end = std::min(train_n, start + static_cast<size_t>(cfg.batch_size));
      std::vector<const TaskExample*> ptrs;
      ptrs.reserve(end - start);
      for (size_t i = start; i < end; ++i) ptrs.push_back(&train[order[i]]);

      EncodedBatch batch = encode_examples(ptrs, vocab);
      TeacherForcedResult res =
          model.teacher_forced_forward(batch, true, &dropout_rng);
      double loss = res.loss.value_f64();
      if (!std::isfinite(loss))
        throw Error("training: non-finite loss at epoch " +
                    std::to_string(epoch) + ", batch " +
                    std::to_string(batch_id));

      adam.zero_grad(params);
      res.loss.backward();
      adam.step(params);

      loss_sum += loss * res.token_count;
      token_sum += res.token_count;
    }

    EpochLog e;
    e.epoch = epoch;
    e.train_loss = token_sum > 0 ? loss_sum / token_sum : 0.0;
    e.val_seq_acc = greedy_seq_acc(model, val_view, vocab, cap);
    e.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                    .count();
    log.epochs.push_back(e);
  }
  return log;
}

HullBounds fit_state_hull(Seq2SeqModel& model,
                          const std::vector<TaskExample>& examples,
                          const Vocab& vocab) {
  if (examples.empty()) throw Error("hull: no examples");
  NoGradGuard guard;
  HullBounds bounds;
  constexpr size_t kChunk = 256;
  for (size_t start = 0; start < examples.size(); start += kChunk) {
    size_t end = std::min(examples.size(), start + kChunk);
    std::vector<const TaskExample*> ptrs;
    for (size_t i = start; i < end; ++i) ptrs.push_back(&examples[i]);
    EncodedBatch batch = encode_examples(ptrs, vocab);
    EncoderOutput enc = model.encode(batch.src, false, nullptr);
    for (size_t i = 0; i < ptrs.size(); ++i) {
      int n_s = enc.src.lengths[i];
      for (int s = 0; s < n_s; ++s) {
        auto d = enc.states[static_cast<size_t>(s)].data();
        int h = enc.states[static_cast<size_t>(s)].dim(1);
        bounds.fit(d.subspan(i * static_cast<size_t>(h),
                             static_cast<size_t>(h)));
      }
    }
  }
  return bounds;
}

EvalReport evaluate_split(Seq2SeqModel& model,
                          const std::vector<TaskExample>& split,
                          const std::string& name, const HullBounds& train_hull,
                          const Vocab& vocab) {
  if (split.empty()) throw Error("eval: empty split '" + name + "'");
  NoGradGuard guard;

  EvalReport report;
  report.split = name;
  report.n_examples = split.size();

  HullCounter counter(train_hull);
  double attn_sum = 0.0;
  size_t correct = 0, correct_be = 0;

  constexpr size_t kChunk = 128;
  for (size_t start = 0; start < split.size(); start += kChunk) {
    size_t end = std::min(split.size(), start + kChunk);
    std::vector<const TaskExample*> ptrs;
    for (size_t i = start; i < end; ++i) ptrs.push_back(&split[i]);
    EncodedBatch batch = encode_examples(ptrs, vocab);

    EncoderOutput enc = model.encode(batch.src, false, nullptr);
    for (size_t i = 0; i < ptrs.size(); ++i) {
      int n_s = enc.src.lengths[i];
      for (int s = 0; s < n_s; ++s) {
        auto d = enc.states[static_cast<size_t>(s)].data();
        int h = enc.states[static_cast<size_t>(s)].dim(1);
        counter.add(d.subspan(i * static_cast<size_t>(h),
                              static_cast<size_t>(h)));
      }
    }

    TeacherForcedResult tf = model.teacher_forced_forward(batch, false, nullptr);
    for (size_t i = 0; i < ptrs.size(); ++i)
      attn_sum += attn_loss(tf.attention[i], ptrs[i]->gold_attention);
  }

  int cap = greedy_cap(split);
  for (const TaskExample& ex : split) {
    GreedyResult res = model.greedy_decode(vocab.encode(ex.input_tokens), cap);
    std::vector<int> pred = res.tokens;
    if (res.emitted_eos) pred.push_back(vocab.eos());
    std::vector<int> target = vocab.encode(ex.target_tokens);
    if (seq_acc(pred, target, vocab.eos())) ++correct;
    if (seq_acc_be(pred, target, vocab.eos())) ++correct_be;
  }

  report.seq_acc = static_cast<double>(correct) / static_cast<double>(split.size());
  report.seq_acc_be =
      static_cast<double>(correct_be) / static_cast<double>(split.size());
  report.attn_loss = attn_sum / static_cast<double>(split.size());
  report.hull = counter.report();
  return report;
}

}  // namespace longreach
