#include "orgtrl/checkpoint.hpp"

#include <fstream>

#include "orgtrl/tensor.hpp"

namespace orgtrl {

namespace {

FeatureTensor mat_to_tensor(const ad::Mat<float>& m) {
  FeatureTensor t;
  t.shape = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  t.data.assign(m.data(), m.data() + m.size());
  return t;
}

ad::Mat<float> tensor_to_matf(const FeatureTensor& t, const std::string& name) {
  if (t.rank() != 2) throw ShapeError("checkpoint tensor " + name + " must be rank 2");
  ad::Mat<float> m(t.dim(0), t.dim(1));
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

}  // namespace

void save_parameters(const ad::ParameterStore<float>& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream index(dir / "index.txt", std::ios::trunc);
  if (!index) throw LoadError("cannot write checkpoint index in " + dir.string());
  for (const auto& e : store.entries()) {
    index << e.name << '\t' << e.value.rows() << '\t' << e.value.cols() << '\n';
    write_tensor_file(dir / (e.name + ".orgt"), mat_to_tensor(e.value));
  }
}

void load_parameters(ad::ParameterStore<float>& store, const std::filesystem::path& dir) {
  std::ifstream index(dir / "index.txt");
  if (!index) throw LoadError("cannot open checkpoint index in " + dir.string());
  std::size_t loaded = 0;
  std::string name;
  long rows = 0, cols = 0;
  while (index >> name >> rows >> cols) {
    auto& entry = store.at(name);
    if (entry.value.rows() != rows || entry.value.cols() != cols) {
      throw ShapeError("checkpoint parameter " + name + " has mismatched shape");
    }
    entry.value = tensor_to_matf(read_tensor_file(dir / (name + ".orgt")), name);
    ++loaded;
  }
  if (loaded != store.size()) {
    throw LoadError("checkpoint in " + dir.string() + " does not cover every parameter");
  }
}

void save_train_state(const ad::ParameterStore<float>& store, const std::filesystem::path& dir,
                      const TrainState& state) {
  const auto opt = dir / "optimizer";
  std::filesystem::create_directories(opt);
  for (const auto& e : store.entries()) {
    write_tensor_file(opt / (e.name + ".m1.orgt"), mat_to_tensor(e.moment1));
    write_tensor_file(opt / (e.name + ".m2.orgt"), mat_to_tensor(e.moment2));
  }
  std::ofstream out(opt / "state.txt", std::ios::trunc);
  if (!out) throw LoadError("cannot write optimizer state in " + dir.string());
  out << "step=" << state.step << "\nnext_epoch=" << state.next_epoch << "\n";
}

bool has_train_state(const std::filesystem::path& dir) {
  return std::filesystem::exists(dir / "optimizer" / "state.txt");
}

TrainState load_train_state(ad::ParameterStore<float>& store, const std::filesystem::path& dir) {
  const auto opt = dir / "optimizer";
  for (auto& e : store.entries()) {
    e.moment1 = tensor_to_matf(read_tensor_file(opt / (e.name + ".m1.orgt")), e.name);
    e.moment2 = tensor_to_matf(read_tensor_file(opt / (e.name + ".m2.orgt")), e.name);
  }
  std::ifstream in(opt / "state.txt");
  if (!in) throw LoadError("cannot open optimizer state in " + dir.string());
  TrainState state;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("step=", 0) == 0) state.step = std::stoll(line.substr(5));
    if (line.rfind("next_epoch=", 0) == 0) state.next_epoch = std::stoll(line.substr(11));
  }
  return state;
}

}  // namespace orgtrl
