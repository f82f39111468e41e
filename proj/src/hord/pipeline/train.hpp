#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hord/pipeline/config.hpp"
#include "hord/pipeline/dataset.hpp"
#include "hord/pipeline/model.hpp"

namespace hord::pipeline {

struct TrainResult {
  Model model;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

// Called after every epoch with (epoch index from 1, mean loss).
using EpochCallback = std::function<void(std::size_t, double)>;

// SGD with momentum over identity-balanced P x K batches of the training
// identities; the learning rate drops by 10x at 1/4 and 2/3 of the epochs.
// A non-finite loss aborts with NumericalError naming the epoch. The global
// and semantic variants have no retrieval parameters and come back as
// initialized, with an empty trace.
TrainResult train(const Dataset& data, const Config& config, const EpochCallback& on_epoch = {});

// Identity-balanced batches (P identities x K images) for one epoch. `ids`
// maps each class to its sample indices.
std::vector<std::vector<std::size_t>> epoch_batches(
    const std::vector<std::vector<std::size_t>>& ids, std::size_t batch_p, std::size_t batch_k,
    std::mt19937_64& rng);

double learning_rate(const Config& config, std::size_t epoch);

std::string format_loss_trace(const std::vector<double>& epoch_loss);

}  // namespace hord::pipeline
