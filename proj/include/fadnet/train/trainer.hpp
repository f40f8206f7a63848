#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fadnet/core/image.hpp"
#include "fadnet/metrics/segmentation.hpp"
#include "fadnet/model/fadnet.hpp"
#include "fadnet/train/adam.hpp"

namespace fadnet {

struct TrainConfig {
  AdamConfig adam;
  LrTable schedule = default_lr_table();
  int epochs = 300;
  int batch_size = 2;
  std::uint64_t seed = 1;
  // Optional early stop once the eval-mode training-set mean Dice reaches
  // this value, checked every `eval_every` epochs.
  std::optional<double> target_dice;
  int eval_every = 5;

  void validate() const {
    validate_lr_table(schedule);
    if (epochs < 0) throw std::invalid_argument("TrainConfig: negative epochs");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (eval_every < 1) throw std::invalid_argument("TrainConfig: eval_every must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  nlohmann::json sched = nlohmann::json::object();
  for (const auto& [e, lr] : c.schedule) sched[std::to_string(e)] = lr;
  j = nlohmann::json{{"beta1", c.adam.beta1},
                     {"beta2", c.adam.beta2},
                     {"eps", c.adam.eps},
                     {"weight_decay", c.adam.weight_decay},
                     {"schedule", sched},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"seed", c.seed},
                     {"eval_every", c.eval_every}};
  j["target_dice"] = c.target_dice ? nlohmann::json(*c.target_dice) : nlohmann::json(nullptr);
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  static const std::vector<std::string> known = {"beta1",  "beta2",      "eps",  "weight_decay", "schedule",
                                                 "epochs", "batch_size", "seed", "eval_every",   "target_dice"};
  for (const auto& [k, v] : j.items())
    if (std::find(known.begin(), known.end(), k) == known.end())
      throw std::invalid_argument("TrainConfig: unknown key '" + k + "'");
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.eps = j.value("eps", c.adam.eps);
  c.adam.weight_decay = j.value("weight_decay", c.adam.weight_decay);
  if (j.contains("schedule")) {
    c.schedule.clear();
    for (const auto& [e, lr] : j.at("schedule").items()) c.schedule[std::stoi(e)] = lr.get<double>();
  }
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.seed = j.value("seed", c.seed);
  c.eval_every = j.value("eval_every", c.eval_every);
  if (j.contains("target_dice") && !j.at("target_dice").is_null()) c.target_dice = j.at("target_dice").get<double>();
  c.validate();
}

/// An image/mask pair; masks are 0/1.
struct TrainingPair {
  Image8 image;
  Image8 mask;
};

struct TrainResult {
  FadNetParams<float> params;
  std::vector<double> epoch_loss;
  std::vector<double> epoch_dice;  // one entry per early-stop evaluation
  int epochs_run = 0;
};

class TrainingDiverged : public NumericError {
 public:
  using NumericError::NumericError;
};

using EpochCallback = std::function<void(int epoch, double loss, double lr)>;

/// Eval-mode mean Dice of thresholded predictions over the pairs.
inline double mean_dice(const FadNetParams<float>& params, const std::vector<TrainingPair>& data) {
  double sum = 0;
  for (const auto& d : data) {
    const Tensor4<float> prob = fadnet_predict(images_to_tensor<float>({&d.image}), params);
    sum += overlap_metrics(threshold_plane(prob, 0), d.mask).dice;
  }
  return data.empty() ? 0.0 : sum / static_cast<double>(data.size());
}

/// Deterministic training loop: the shuffle order, dropout masks and
/// initialization all derive from `cfg.seed`.
inline TrainResult train(const std::vector<TrainingPair>& data, const TrainConfig& cfg, const FadNetConfig& net,
                         const EpochCallback& on_epoch = {}, const FadNetParams<float>* init = nullptr) {
  cfg.validate();
  net.validate();
  if (data.empty()) throw std::invalid_argument("train: empty dataset");
  for (const auto& d : data) {
    require_same_extent(d.image, d.mask, "train");
    if (d.image.height != static_cast<std::size_t>(net.height) || d.image.width != static_cast<std::size_t>(net.width))
      throw ShapeError("train: sample extent does not match network config");
  }

  TrainResult res;
  res.params = init ? *init : init_parameters<float>(net, cfg.seed);
  if (!(res.params.config() == net)) throw std::invalid_argument("train: initial parameters use a different config");

  std::vector<std::size_t> trainable;
  for (std::size_t i = 0; i < res.params.size(); ++i)
    if (is_trainable(res.params.spec(i).kind)) trainable.push_back(i);
  std::vector<Tensor4<float>*> ptrs;
  for (std::size_t i : trainable) ptrs.push_back(&res.params[i]);
  AdamState<float> adam;

  std::mt19937_64 shuffle_rng(mix_seed(cfg.seed ^ 0x5348554646ULL));
  std::vector<std::size_t> order(data.size());
  std::uint64_t step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = lr_schedule(epoch, cfg.schedule);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[shuffle_rng() % i]);

    double loss_sum = 0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const Image8*> imgs, masks;
      for (std::size_t k = start; k < end; ++k) {
        imgs.push_back(&data[order[k]].image);
        masks.push_back(&data[order[k]].mask);
      }
      const Tensor4<float> x = images_to_tensor<float>(imgs);
      const Tensor4<float> y = images_to_tensor<float>(masks, 1.0);

      Tape<float> tape;
      BoundParams<float> bound(tape, res.params, true);
      ForwardContext<float> ctx{bound, net, Mode::train, mix_seed(cfg.seed + 0x9E37ULL * ++step)};
      Var<float> loss = ag::mse_loss(fadnet_forward(ctx, tape.leaf(x)), y);
      const double lv = loss.value()[0];
      if (!std::isfinite(lv)) {
        throw TrainingDiverged("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                               std::to_string(step));
      }
      tape.backward(loss);
      std::vector<Tensor4<float>> grads;
      grads.reserve(trainable.size());
      for (std::size_t i : trainable) grads.push_back(bound.grad(i));
      adam_step(ptrs, grads, adam, lr, cfg.adam);
      loss_sum += lv;
      ++batches;
    }
    const double epoch_loss = loss_sum / static_cast<double>(batches);
    res.epoch_loss.push_back(epoch_loss);
    res.epochs_run = epoch + 1;
    if (on_epoch) on_epoch(epoch, epoch_loss, lr);
    if (cfg.target_dice && (epoch + 1) % cfg.eval_every == 0) {
      const double dice = mean_dice(res.params, data);
      res.epoch_dice.push_back(dice);
      if (dice >= *cfg.target_dice) break;
    }
  }
  return res;
}

}  // namespace fadnet
