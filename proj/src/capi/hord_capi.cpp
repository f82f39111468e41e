#include "hord/hord.h"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>
#include <vector>

#include "hord/binary_io.hpp"
#include "hord/error.hpp"
#include "hord/pipeline/config.hpp"
#include "hord/pipeline/dataset.hpp"
#include "hord/pipeline/diagnostics.hpp"
#include "hord/pipeline/model.hpp"
#include "hord/pipeline/retrieval.hpp"
#include "hord/pipeline/train.hpp"

struct hord_config {
  hord::pipeline::Config value;
};

struct hord_dataset {
  hord::pipeline::Dataset value;
};

struct hord_model {
  hord::pipeline::Model value;
  std::vector<double> loss;
};

namespace {

thread_local std::string last_error;

hord_status status_of(hord::ErrorKind kind) {
  switch (kind) {
    case hord::ErrorKind::usage:
      return HORD_ERR_USAGE;
    case hord::ErrorKind::io:
      return HORD_ERR_IO;
    case hord::ErrorKind::numerical:
      return HORD_ERR_NUMERICAL;
  }
  return HORD_ERR_USAGE;
}

template <typename F>
hord_status guard(F&& body) {
  try {
    body();
    last_error.clear();
    return HORD_OK;
  } catch (const hord::Error& e) {
    last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return HORD_ERR_NUMERICAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return HORD_ERR_USAGE;
  }
}

void need(const void* p, const char* what) {
  if (!p) throw hord::UsageError(std::string(what) + " must not be null");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

}  // namespace

extern "C" {

const char* hord_last_error(void) { return last_error.c_str(); }

void hord_string_free(char* s) { std::free(s); }

hord_status hord_config_new(hord_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new hord_config{};
  });
}

hord_status hord_config_load(const char* path, hord_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new hord_config{hord::pipeline::load_config(path)};
  });
}

hord_status hord_config_parse(const char* text, hord_config** out) {
  return guard([&] {
    need(text, "text");
    need(out, "out");
    *out = new hord_config{hord::pipeline::parse_config(text)};
  });
}

hord_status hord_config_set(hord_config* config, const char* key, const char* value) {
  return guard([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    auto updated = config->value;
    hord::pipeline::set_config_value(updated, key, value);
    updated.validate();
    config->value = updated;
  });
}

hord_status hord_config_serialize(const hord_config* config, char** out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    *out = copy_string(hord::pipeline::serialize_config(config->value));
  });
}

void hord_config_free(hord_config* config) { delete config; }

hord_status hord_dataset_generate(size_t ids, size_t per_id, double occlusion_rate, uint64_t seed,
                                  hord_dataset** out) {
  return guard([&] {
    need(out, "out");
    hord::pipeline::SyntheticSpec spec;
    spec.num_ids = ids;
    spec.samples_per_id = per_id;
    spec.occlusion_rate = occlusion_rate;
    spec.seed = seed;
    *out = new hord_dataset{hord::pipeline::generate_synthetic(spec)};
  });
}

hord_status hord_dataset_load(const char* path, hord_dataset** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new hord_dataset{hord::pipeline::load_dataset(path)};
  });
}

hord_status hord_dataset_save(const hord_dataset* data, const char* path) {
  return guard([&] {
    need(data, "data");
    need(path, "path");
    hord::pipeline::save_dataset(path, data->value);
  });
}

size_t hord_dataset_size(const hord_dataset* data) { return data ? data->value.samples.size() : 0; }

void hord_dataset_free(hord_dataset* data) { delete data; }

hord_status hord_train(const hord_dataset* data, const hord_config* config, hord_epoch_fn on_epoch,
                       void* user, hord_model** out) {
  return guard([&] {
    need(data, "data");
    need(config, "config");
    need(out, "out");
    hord::pipeline::EpochCallback callback;
    if (on_epoch) callback = [&](std::size_t epoch, double loss) { on_epoch(epoch, loss, user); };
    auto result = hord::pipeline::train(data->value, config->value, callback);
    *out = new hord_model{std::move(result.model), std::move(result.epoch_loss)};
  });
}

hord_status hord_model_load(const char* path, hord_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new hord_model{hord::pipeline::load_model(path), {}};
  });
}

hord_status hord_model_save(const hord_model* model, const char* path) {
  return guard([&] {
    need(model, "model");
    need(path, "path");
    hord::pipeline::save_model(path, model->value);
  });
}

hord_status hord_model_save_loss_trace(const hord_model* model, const char* path) {
  return guard([&] {
    need(model, "model");
    need(path, "path");
    const auto text = hord::pipeline::format_loss_trace(model->loss);
    hord::io::write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
  });
}

hord_status hord_model_loss_trace(const hord_model* model, const double** values, size_t* count) {
  return guard([&] {
    need(model, "model");
    need(values, "values");
    need(count, "count");
    *values = model->loss.data();
    *count = model->loss.size();
  });
}

hord_status hord_model_config(const hord_model* model, char** out) {
  return guard([&] {
    need(model, "model");
    need(out, "out");
    *out = copy_string(hord::pipeline::serialize_config(model->value.config));
  });
}

void hord_model_free(hord_model* model) { delete model; }

hord_status hord_evaluate(const hord_model* model, const hord_dataset* data, double gamma,
                          size_t top_n, hord_metrics* out) {
  return guard([&] {
    need(model, "model");
    need(data, "data");
    need(out, "out");
    const auto& config = model->value.config;
    const auto m = hord::pipeline::evaluate_model(model->value, data->value,
                                                  gamma < 0.0 ? config.gamma : gamma,
                                                  top_n == 0 ? config.top_n : top_n);
    auto at = [&](std::size_t r) { return m.cmc[std::min(r, m.cmc.size()) - 1]; };
    *out = {at(1), at(5), at(10), m.map};
  });
}

hord_status hord_metrics_format(const hord_metrics* metrics, char** out) {
  return guard([&] {
    need(metrics, "metrics");
    need(out, "out");
    char text[160];
    std::snprintf(text, sizeof text, "rank-1\t%.6f\nrank-5\t%.6f\nrank-10\t%.6f\nmAP\t%.6f\n",
                  metrics->rank1, metrics->rank5, metrics->rank10, metrics->map);
    *out = copy_string(text);
  });
}

hord_status hord_gradcheck(uint64_t first_seed, size_t seeds, double* max_error, char** report) {
  return guard([&] {
    need(max_error, "max_error");
    if (seeds == 0) throw hord::UsageError("gradcheck needs at least one seed");
    double worst = 0.0;
    std::string text;
    char line[160];
    for (std::size_t s = 0; s < seeds; ++s) {
      const auto seed = first_seed + s;
      for (const auto& entry : hord::pipeline::gradient_suite(seed)) {
        worst = std::max(worst, entry.error);
        std::snprintf(line, sizeof line, "%llu\t%s\t%.3e\n", static_cast<unsigned long long>(seed),
                      entry.name.c_str(), entry.error);
        text += line;
      }
    }
    *max_error = worst;
    if (report) *report = copy_string(text);
  });
}

hord_status hord_gm_demo(size_t keypoints, uint64_t seed, char** report) {
  return guard([&] {
    need(report, "report");
    *report = copy_string(
        hord::pipeline::format_matching_demo(hord::pipeline::matching_demo(keypoints, seed)));
  });
}

}  // extern "C"
