#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "eskin/binary_io.hpp"
#include "eskin/error.hpp"
#include "eskin/vd2t.hpp"

namespace eskin {

namespace {

constexpr std::string_view kCheckpointMagic = "ESKVD2T1";

void put(std::ostream& os, const Eigen::MatrixXd& m) {
  write_array<double>(os, {m.data(), static_cast<std::size_t>(m.size())});
}

void get(std::istream& is, Eigen::MatrixXd& m) { read_array<double>(is, {m.data(), static_cast<std::size_t>(m.size())}); }

}  // namespace

// Payload: every parameter then every buffer in header order (column-major
// doubles), then dv_mean, dv_scale and deform_scale.
void write_checkpoint(const std::string& path, Vd2tModel& m, const CheckpointInfo& info) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  nlohmann::json tensors = nlohmann::json::array();
  auto params = m.params();
  auto buffers = m.buffers();
  for (const auto* group : {&params, &buffers})
    for (const auto& p : *group)
      tensors.push_back({{"name", p.name}, {"rows", p.value->rows()}, {"cols", p.value->cols()}});
  const nlohmann::json h = {
      {"format", "eskin-vd2t-checkpoint"},
      {"version", 1},
      {"config", nlohmann::json::parse(to_json(m.config()))},
      {"seed", m.config().seed},
      {"epoch", info.epoch},
      {"val_loss", info.val_loss},
      {"parameter_count", m.parameter_count()},
      {"tensors", tensors},
  };
  write_framed_header(out, kCheckpointMagic, h.dump());
  for (const auto* group : {&params, &buffers})
    for (const auto& p : *group) put(out, *p.value);
  const InputNorm& n = m.input_norm();
  write_array<double>(out, {n.dv_mean.data(), static_cast<std::size_t>(n.dv_mean.size())});
  write_array<double>(out, {n.dv_scale.data(), static_cast<std::size_t>(n.dv_scale.size())});
  write_pod(out, n.deform_scale);
  if (!out) throw IoError("write failed for " + path);
}

std::unique_ptr<Vd2tModel> read_checkpoint(const std::string& path, CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingInput("cannot open checkpoint " + path);
  const auto h = nlohmann::json::parse(read_framed_header(in, kCheckpointMagic, path));
  if (h.at("version").get<int>() != 1) throw IoError(path + ": unsupported checkpoint version");
  auto m = std::make_unique<Vd2tModel>(vd2t_config_from_json(h.at("config").dump()));
  auto params = m->params();
  auto buffers = m->buffers();
  const auto& tensors = h.at("tensors");
  if (tensors.size() != params.size() + buffers.size()) throw IoError(path + ": tensor list does not match config");
  std::size_t k = 0;
  for (const auto* group : {&params, &buffers})
    for (const auto& p : *group) {
      const auto& t = tensors[k++];
      if (t.at("name").get<std::string>() != p.name || t.at("rows").get<Eigen::Index>() != p.value->rows() ||
          t.at("cols").get<Eigen::Index>() != p.value->cols())
        throw IoError(path + ": tensor " + t.at("name").get<std::string>() + " does not match config");
      get(in, *p.value);
    }
  InputNorm& n = m->input_norm();
  read_array<double>(in, {n.dv_mean.data(), static_cast<std::size_t>(n.dv_mean.size())});
  read_array<double>(in, {n.dv_scale.data(), static_cast<std::size_t>(n.dv_scale.size())});
  n.deform_scale = read_pod<double>(in);
  if (info) {
    info->epoch = h.at("epoch").get<int>();
    info->val_loss = h.at("val_loss").get<double>();
  }
  return m;
}

void write_loss_csv(const std::string& path, const TrainReport& r) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot write " + path);
  std::fprintf(f, "epoch,train_loss,val_loss\n");
  for (std::size_t e = 0; e < r.train_loss.size(); ++e)
    std::fprintf(f, "%zu,%.17g,%.17g\n", e + 1, r.train_loss[e], r.val_loss[e]);
  if (std::fclose(f) != 0) throw IoError("write failed for " + path);
}

}  // namespace eskin
