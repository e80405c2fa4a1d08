#pragma once

// Deterministic Adam training loop over random patches, with the lr drop
// schedule, periodic checkpoints, and NaN abort restoring the last good
// parameters.

#include "epiwarp/adam.hpp"
#include "epiwarp/model.hpp"

namespace epiwarp {

template <class T>
struct Trainer {
  EpiWarpModel<T>& model;
  std::vector<RenderedSample<T>> dataset;
  std::string out_dir;
  AdamState<T> adam;
  std::mt19937_64 rng;
  std::size_t step = 0;

  Trainer(EpiWarpModel<T>& model_, std::vector<RenderedSample<T>> dataset_,
          std::string out_dir_)
      : model(model_), dataset(std::move(dataset_)), out_dir(std::move(out_dir_)),
        rng(model_.cfg.seed) {
    if (dataset.empty()) throw DataError("trainer: empty dataset");
    adam.learning_rate = T(model.cfg.lr);
  }

  std::string checkpoint_path() const { return out_dir + "/model.epw"; }
  std::string csv_path() const { return out_dir + "/loss.csv"; }

  // one optimizer step over a batch of random patches; returns the report
  LossReport<T> train_step() {
    const RunConfig& cfg = model.cfg;
    adam.learning_rate = T(step < cfg.lr_drop_step ? cfg.lr : cfg.lr_dropped);
    model.params.zero_grads();
    Tensor<T> batch_loss;
    LossReport<T> report;
    report.lambda = cfg.lambda;
    try {
      for (std::size_t b = 0; b < cfg.batch; ++b) {
        RenderedSample<T>& scene = dataset[rng() % dataset.size()];
        RenderedSample<T> patch =
            cfg.patch < scene.target().width() ||
                    cfg.patch < scene.target().height()
                ? crop_patch(scene, cfg.patch, rng)
                : scene;
        auto fwd = model.forward(patch);
        auto loss = model.compute_loss(fwd, patch);
        report.recon += loss.report.recon / double(cfg.batch);
        report.ssim_loss += loss.report.ssim_loss / double(cfg.batch);
        report.weight_smooth += loss.report.weight_smooth / double(cfg.batch);
        report.total += loss.report.total / double(cfg.batch);
        Tensor<T> scaled = mul_scalar(loss.value, T(1.0 / double(cfg.batch)));
        batch_loss = b == 0 ? scaled : add(batch_loss, scaled);
      }
      if (!std::isfinite(report.total))
        throw NumericError("non-finite loss");
    } catch (const NumericError& e) {
      model.save(checkpoint_path());  // params predate the bad update
      throw NumericError("training aborted at step " + std::to_string(step) +
                         ": " + e.what() + "; last good checkpoint kept at " +
                         checkpoint_path());
    }
    batch_loss.backward();
    adam_step(adam, model.params);
    append_loss_csv(csv_path(), step, report);
    ++step;
    if (step % model.cfg.checkpoint_every == 0) model.save(checkpoint_path());
    return report;
  }

  void run() {
    for (std::size_t s = step; s < model.cfg.steps; ++s) train_step();
    model.save(checkpoint_path());
  }
};

}  // namespace epiwarp
