#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "longreach/metrics.hpp"
#include "longreach/model.hpp"
#include "longreach/tasks.hpp"
#include "longreach/vocab.hpp"

namespace longreach {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 8;
  float lr = 3e-3f;
  uint64_t seed = 0;
  bool shuffle = true;
  // Held back from training, scored with greedy decoding for the log only.
  float validation_fraction = 0.05f;
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_seq_acc = -1.0;  // -1 when no validation slice
  double seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
};

void write_train_log(const TrainLog& log, const std::filesystem::path& file);

// Adam on token cross-entropy over shuffled minibatches. Deterministic in
// (model seed, cfg.seed). Raises Error naming epoch and batch if the loss
// turns non-finite.
TrainLog train_model(Seq2SeqModel& model, const std::vector<TaskExample>& train,
                     const Vocab& vocab, const TrainConfig& cfg);

// Bounding box of every encoder state the model produces on the given
// examples (the training split, for the extrapolation diagnostic).
HullBounds fit_state_hull(Seq2SeqModel& model,
                          const std::vector<TaskExample>& examples,
                          const Vocab& vocab);

// Greedy decoding for the sequence metrics, a teacher-forced pass for the
// alignment metric, and hull counting against the training box.
EvalReport evaluate_split(Seq2SeqModel& model,
                          const std::vector<TaskExample>& split,
                          const std::string& name, const HullBounds& train_hull,
                          const Vocab& vocab);

EncodedBatch encode_examples(std::span<const TaskExample* const> examples,
                             const Vocab& vocab);

int greedy_cap(const std::vector<TaskExample>& split);

}  // namespace longreach
