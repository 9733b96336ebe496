#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "eskin/forward.hpp"
#include "eskin/pointcloud.hpp"
#include "eskin/recon.hpp"
#include "eskin/vd2t_layers.hpp"

namespace eskin {

enum class VoltagePooling {
  // Mean over the sequence of each 1-D conv channel.
  kAverage,
  // Keep every (channel, position) feature.
  kFlatten,
};

const char* to_string(VoltagePooling p);
VoltagePooling voltage_pooling_from_string(const std::string& s);

struct Vd2tConfig {
  int voltage_len = 104;
  int deform_rows = 27;
  int deform_cols = 50;
  std::array<int, 3> mlp_widths{256, 256, 128};
  std::array<int, 3> conv1d_channels{8, 16, 32};
  int conv1d_kernel = 5;
  std::array<int, 2> conv2d_channels{8, 16};
  int conv2d_kernel = 3;
  int conv2d_stride = 2;
  std::array<int, 2> fusion_widths{512, 1350};
  int output_len = 1350;
  VoltagePooling pooling = VoltagePooling::kAverage;
  double dropout_p = 0.2;
  double lr = 1e-4;
  int batch_size = 512;
  int epochs = 100;
  std::uint64_t seed = 0;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Serialised as a flat JSON object; parsing rejects unknown keys.
std::string to_json(const Vd2tConfig& c);
Vd2tConfig vd2t_config_from_json(const std::string& json);

// Fixed input standardisation, fitted on the training split.
struct InputNorm {
  Eigen::VectorXd dv_mean;
  Eigen::VectorXd dv_scale;
  double deform_scale = 1.0;
};

class Vd2tModel {
 public:
  // Seeded fan-in uniform initialisation; batch-norm scale 1, shift 0.
  explicit Vd2tModel(const Vd2tConfig& c);
  // The dropout layer points at the model's own generator.
  Vd2tModel(const Vd2tModel&) = delete;
  Vd2tModel& operator=(const Vd2tModel&) = delete;

  const Vd2tConfig& config() const { return config_; }

  // dv: voltage_len x B, deform: (rows * cols) x B, row-major height grids.
  // Returns probabilities (output_len x B), strictly inside (0, 1).
  nn::Mat forward(const nn::Mat& dv, const nn::Mat& deform, bool training);
  // Back-propagates d loss / d logits from the last training forward.
  void backward(const nn::Mat& dlogits);

  std::vector<nn::Param> params();
  std::vector<nn::Param> buffers();
  long parameter_count();

  InputNorm& input_norm() { return norm_; }
  const InputNorm& input_norm() const { return norm_; }
  // Restarts the dropout mask stream.
  void reseed_dropout(std::uint64_t seed) { dropout_rng_.seed(seed); }

 private:
  Vd2tConfig config_;
  nn::Rng dropout_rng_;
  nn::Sequential voltage_, deform_, fusion_;
  InputNorm norm_;
};

// Mean binary cross-entropy with predictions clamped to [1e-7, 1 - 1e-7].
double bce_loss(const nn::Mat& pred, const nn::Mat& target);

// Training data: one sample per column.
struct Vd2tData {
  nn::Mat dv;
  nn::Mat deform;
  nn::Mat target;

  int size() const { return static_cast<int>(dv.cols()); }
  void validate(const Vd2tConfig& c) const;
};

// One training-mode forward and backward pass with a fixed dropout mask
// stream. Gradients land in the model's parameter gradient slots. The
// gradient with respect to the logits is (p - y) / N, exact wherever the
// loss clamp is inactive.
double loss_and_gradient(Vd2tModel& m, const nn::Mat& dv, const nn::Mat& deform, const nn::Mat& target,
                         std::uint64_t mask_seed);
// Same loss without the backward pass.
double batch_loss(Vd2tModel& m, const nn::Mat& dv, const nn::Mat& deform, const nn::Mat& target, bool training,
                  std::uint64_t mask_seed = 0);

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  // 1-based.
  int best_epoch = 0;
  double best_val_loss = 0.0;
  int n_train = 0;
  int n_val = 0;
};

using EpochCallback = std::function<void(int epoch, double train_loss, double val_loss)>;

// Deterministic 90/10 split by seed, Adam on mini-batches, fitted input
// standardisation. Leaves the model at its best validation epoch.
TrainReport train(Vd2tModel& m, const Vd2tData& data, const EpochCallback& on_epoch = {});

// Indices of the training and validation samples for n samples.
std::pair<std::vector<int>, std::vector<int>> split_indices(int n, std::uint64_t seed);

// Evaluation-mode loss over a set of columns.
double evaluate_loss(Vd2tModel& m, const Vd2tData& data, const std::vector<int>& idx);

// Evaluation-mode prediction on the reconstruction lattice.
TactileMap predict_map(Vd2tModel& m, const Eigen::VectorXd& dv, const DeformationDescriptor& d,
                       const Lattice& lattice = {});
// Frame-level entry point: the reference must be the flat, untouched frame.
TactileMap predict_map(Vd2tModel& m, const MeasurementFrame& touched, const MeasurementFrame& reference,
                       const DeformationDescriptor& d, const Lattice& lattice = {});

struct CheckpointInfo {
  int epoch = 0;
  double val_loss = 0.0;
};

void write_checkpoint(const std::string& path, Vd2tModel& m, const CheckpointInfo& info);
std::unique_ptr<Vd2tModel> read_checkpoint(const std::string& path, CheckpointInfo* info = nullptr);

// epoch,train_loss,val_loss
void write_loss_csv(const std::string& path, const TrainReport& r);

}  // namespace eskin
