#include "agp/config.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>
#include <string>

namespace agp {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(DatasetKind kind) { return kind == DatasetKind::mnist ? "mnist" : "cifar10"; }

DatasetKind dataset_from_string(std::string_view s) {
  if (s == "mnist") return DatasetKind::mnist;
  if (s == "cifar10") return DatasetKind::cifar10;
  throw std::invalid_argument("unknown dataset '" + std::string(s) + "'");
}

void RunConfig::validate() const {
  PruneConfig{p, placement_for(model), seed}.validate();
  optimizer.validate();
  if (epochs == 0) throw std::invalid_argument("config: epochs must be >= 1");
  if (batch_size == 0) throw std::invalid_argument("config: batch_size must be >= 1");
  if (subset_per_class && *subset_per_class == 0) throw std::invalid_argument("config: subset_per_class must be >= 1");
  if (threads == 0) throw std::invalid_argument("config: threads must be >= 1");
}

RunConfig run_config_from_json(const json& j) {
  static const char* known[] = {"model",      "dataset", "p",       "seed",       "epochs",   "batch_size",
                                "optimizer",  "subset_per_class",   "data_dir",   "augment",  "threads",
                                "test_limit", "backward"};
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(known), std::end(known), key) == std::end(known)) {
      throw std::invalid_argument("config: unknown key '" + key + "'");
    }
  }
  RunConfig cfg;
  if (j.contains("model")) cfg.model = model_from_string(j.at("model").get<std::string>());
  if (j.contains("dataset")) cfg.dataset = dataset_from_string(j.at("dataset").get<std::string>());
  cfg.p = j.value("p", cfg.p);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  if (j.contains("optimizer")) {
    const auto& o = j.at("optimizer");
    cfg.optimizer.lr = o.value("lr", cfg.optimizer.lr);
    cfg.optimizer.momentum = o.value("momentum", cfg.optimizer.momentum);
    cfg.optimizer.weight_decay = o.value("weight_decay", cfg.optimizer.weight_decay);
    cfg.optimizer.lr_decay_factor = o.value("lr_decay_factor", cfg.optimizer.lr_decay_factor);
    cfg.optimizer.lr_decay_every = o.value("lr_decay_every", cfg.optimizer.lr_decay_every);
  }
  if (j.contains("subset_per_class") && !j.at("subset_per_class").is_null()) {
    cfg.subset_per_class = j.at("subset_per_class").get<std::size_t>();
  }
  if (j.contains("data_dir")) cfg.data_dir = j.at("data_dir").get<std::string>();
  cfg.augment = j.value("augment", cfg.augment);
  cfg.threads = j.value("threads", cfg.threads);
  if (j.contains("test_limit") && !j.at("test_limit").is_null()) cfg.test_limit = j.at("test_limit").get<std::size_t>();
  if (j.contains("backward")) {
    const auto b = j.at("backward").get<std::string>();
    if (b == "sparse") {
      cfg.backward = BackwardPath::sparse;
    } else if (b == "dense") {
      cfg.backward = BackwardPath::dense;
    } else {
      throw std::invalid_argument("config: backward must be 'sparse' or 'dense'");
    }
  }
  cfg.validate();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json j;
  j["model"] = std::string(to_string(cfg.model));
  j["dataset"] = std::string(to_string(cfg.dataset));
  j["p"] = cfg.p;
  j["seed"] = cfg.seed;
  j["epochs"] = cfg.epochs;
  j["batch_size"] = cfg.batch_size;
  j["optimizer"] = {{"lr", cfg.optimizer.lr},
                    {"momentum", cfg.optimizer.momentum},
                    {"weight_decay", cfg.optimizer.weight_decay},
                    {"lr_decay_factor", cfg.optimizer.lr_decay_factor},
                    {"lr_decay_every", cfg.optimizer.lr_decay_every}};
  j["subset_per_class"] = cfg.subset_per_class ? json(*cfg.subset_per_class) : json(nullptr);
  j["data_dir"] = cfg.data_dir.string();
  j["augment"] = cfg.augment;
  j["threads"] = cfg.threads;
  j["test_limit"] = cfg.test_limit ? json(*cfg.test_limit) : json(nullptr);
  j["backward"] = cfg.backward == BackwardPath::sparse ? "sparse" : "dense";
  return j;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

DatasetFiles locate_dataset(DatasetKind kind, const fs::path& data_dir) {
  DatasetFiles files;
  if (kind == DatasetKind::mnist) {
    files.train = {data_dir / "train-images-idx3-ubyte", data_dir / "train-labels-idx1-ubyte"};
    files.test = {data_dir / "t10k-images-idx3-ubyte", data_dir / "t10k-labels-idx1-ubyte"};
  } else {
    fs::path root = data_dir;
    if (!fs::exists(root / "data_batch_1.bin") && fs::exists(root / "cifar-10-batches-bin")) {
      root /= "cifar-10-batches-bin";
    }
    for (int i = 1; i <= 5; ++i) files.train.push_back(root / ("data_batch_" + std::to_string(i) + ".bin"));
    files.test = {root / "test_batch.bin"};
  }
  for (const auto* list : {&files.train, &files.test}) {
    for (const auto& f : *list) {
      if (!fs::exists(f)) throw std::runtime_error("dataset file not found: " + f.string());
    }
  }
  return files;
}

}  // namespace agp
