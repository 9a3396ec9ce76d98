#pragma once

#include <cstdint>
#include <vector>

#include "umk/corpus.hpp"
#include "umk/model.hpp"

namespace umk {

// Supervised alignment: marked queries -> refusal sequence, benign queries ->
// [sure] + echo. Trains with Adam until both held-out rates clear their
// targets, then stops.
struct TrainConfig {
  int epochs = 60;
  int min_epochs = 24;  // keep training past the first lucky holdout check
  int batch = 8;
  double lr = 8e-3;
  double beta1 = 0.9;
  double beta2 = 0.99;
  double adam_eps = 1e-8;
  int n_harmful = 256;
  int n_benign = 256;
  int n_captions = 256;  // image-grounded caption pretraining slice
  double caption_marked_fraction = 0.1;
  double image_fraction = 0.1;  // share of QA examples carrying a noise image
  double holdout_fraction = 0.1;
  double refusal_target = 0.95;
  double compliance_target = 0.95;
  int min_continuation = 3;
  int max_new_tokens = 16;
  std::uint64_t seed = 1;
};

struct TrainReport {
  double initial_loss = 0.0;  // mean NLL before any update
  std::vector<double> epoch_losses;
  double holdout_refusal_rate = 0.0;
  double holdout_compliance_rate = 0.0;
  int epochs_run = 0;
};

// Throws training_error (carrying the loss history) if the targets are not
// met within the epoch budget. epochs == 0 returns the seeded initialization.
ModelParams train_aligned(const ModelConfig& model_config, const Vocab& vocab,
                          const TrainConfig& config, TrainReport* report = nullptr);

}  // namespace umk
