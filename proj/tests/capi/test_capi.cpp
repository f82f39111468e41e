#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "hord/hord.h"

extern "C" int hord_header_is_c(void);

namespace {

std::string take(char* s) {
  std::string out = s ? s : "";
  hord_string_free(s);
  return out;
}

std::vector<char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string temp_path(const char* name) { return std::string(HORD_TEST_TMP) + "/" + name; }

hord_config* small_config() {
  hord_config* c = nullptr;
  REQUIRE(hord_config_parse("epochs=2\nlr=0.01\ncgea_depth=1\n", &c) == HORD_OK);
  return c;
}

}  // namespace

TEST_CASE("header compiles as C") { CHECK(hord_header_is_c() == 0); }

TEST_CASE("config handles and errors") {
  hord_config* c = nullptr;
  REQUIRE(hord_config_new(&c) == HORD_OK);
  CHECK(hord_config_set(c, "gamma", "0.25") == HORD_OK);
  CHECK(std::string(hord_last_error()).empty());
  CHECK(hord_config_set(c, "nope", "1") == HORD_ERR_USAGE);
  CHECK(std::string(hord_last_error()).find("nope") != std::string::npos);
  char* text = nullptr;
  REQUIRE(hord_config_serialize(c, &text) == HORD_OK);
  CHECK(take(text).find("gamma=0.25") != std::string::npos);
  hord_config_free(c);

  hord_config* bad = nullptr;
  CHECK(hord_config_parse("gamma=2\n", &bad) == HORD_ERR_USAGE);
  CHECK(bad == nullptr);
  CHECK(hord_config_load("/nonexistent/cfg", &bad) == HORD_ERR_IO);
  CHECK(hord_config_new(nullptr) == HORD_ERR_USAGE);
  hord_config_free(nullptr);
}

TEST_CASE("dataset handles") {
  hord_dataset* a = nullptr;
  hord_dataset* b = nullptr;
  REQUIRE(hord_dataset_generate(4, 4, 0.5, 11, &a) == HORD_OK);
  REQUIRE(hord_dataset_generate(4, 4, 0.5, 11, &b) == HORD_OK);
  CHECK(hord_dataset_size(a) == 16);
  const auto pa = temp_path("capi_a.bin"), pb = temp_path("capi_b.bin");
  REQUIRE(hord_dataset_save(a, pa.c_str()) == HORD_OK);
  REQUIRE(hord_dataset_save(b, pb.c_str()) == HORD_OK);
  CHECK(slurp(pa) == slurp(pb));

  hord_dataset* back = nullptr;
  REQUIRE(hord_dataset_load(pa.c_str(), &back) == HORD_OK);
  CHECK(hord_dataset_size(back) == 16);

  {
    std::ofstream junk(pb, std::ios::binary);
    junk << "not a dataset";
  }
  hord_dataset* broken = nullptr;
  CHECK(hord_dataset_load(pb.c_str(), &broken) == HORD_ERR_IO);
  CHECK(broken == nullptr);
  CHECK(hord_dataset_generate(1, 4, 0.5, 1, &broken) == HORD_ERR_USAGE);
  hord_dataset_free(a);
  hord_dataset_free(b);
  hord_dataset_free(back);
  std::remove(pa.c_str());
  std::remove(pb.c_str());
}

namespace {
void count_epochs(size_t, double loss, void* user) {
  auto* seen = static_cast<std::vector<double>*>(user);
  seen->push_back(loss);
}
}  // namespace

TEST_CASE("train, save, load and evaluate") {
  hord_dataset* data = nullptr;
  REQUIRE(hord_dataset_generate(8, 4, 0.5, 5, &data) == HORD_OK);
  hord_config* config = small_config();
  std::vector<double> seen;
  hord_model* model = nullptr;
  REQUIRE(hord_train(data, config, count_epochs, &seen, &model) == HORD_OK);
  const double* trace = nullptr;
  size_t count = 0;
  REQUIRE(hord_model_loss_trace(model, &trace, &count) == HORD_OK);
  REQUIRE(count == 2);
  CHECK(seen == std::vector<double>(trace, trace + count));

  const auto path = temp_path("capi_model.bin");
  REQUIRE(hord_model_save(model, path.c_str()) == HORD_OK);
  hord_model* loaded = nullptr;
  REQUIRE(hord_model_load(path.c_str(), &loaded) == HORD_OK);
  char* a = nullptr;
  char* b = nullptr;
  REQUIRE(hord_model_config(model, &a) == HORD_OK);
  REQUIRE(hord_model_config(loaded, &b) == HORD_OK);
  CHECK(take(a) == take(b));

  hord_metrics m1{}, m2{};
  REQUIRE(hord_evaluate(model, data, -1.0, 0, &m1) == HORD_OK);
  REQUIRE(hord_evaluate(loaded, data, -1.0, 0, &m2) == HORD_OK);
  CHECK(m1.map == m2.map);
  CHECK(m1.rank1 <= m1.rank5);
  CHECK(m1.rank5 <= m1.rank10);
  char* lines = nullptr;
  REQUIRE(hord_metrics_format(&m1, &lines) == HORD_OK);
  const std::string text = take(lines);
  CHECK(text.find("mAP\t") != std::string::npos);

  CHECK(hord_evaluate(model, data, 2.0, 4, &m1) == HORD_ERR_USAGE);
  hord_model* missing = nullptr;
  CHECK(hord_model_load("/nonexistent/model", &missing) == HORD_ERR_IO);

  hord_model_free(model);
  hord_model_free(loaded);
  hord_config_free(config);
  hord_dataset_free(data);
  std::remove(path.c_str());
}

TEST_CASE("diagnostics") {
  double err = 1.0;
  char* report = nullptr;
  REQUIRE(hord_gradcheck(0, 1, &err, &report) == HORD_OK);
  CHECK(err < 1e-4);
  CHECK(!take(report).empty());

  char* demo = nullptr;
  REQUIRE(hord_gm_demo(3, 1, &demo) == HORD_OK);
  CHECK(!take(demo).empty());
  CHECK(hord_gm_demo(5, 1, &demo) == HORD_ERR_USAGE);
}
