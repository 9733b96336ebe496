#include "eskin/vd2t.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "eskin/error.hpp"

namespace eskin {

using nn::Mat;
using json = nlohmann::json;

const char* to_string(VoltagePooling p) { return p == VoltagePooling::kAverage ? "avg" : "flatten"; }

VoltagePooling voltage_pooling_from_string(const std::string& s) {
  if (s == "avg") return VoltagePooling::kAverage;
  if (s == "flatten") return VoltagePooling::kFlatten;
  throw ConfigError("unknown pooling '" + s + "' (expected avg or flatten)");
}

void Vd2tConfig::validate() const {
  auto positive = [](int v, const std::string& field) {
    if (v < 1) throw ConfigError("model." + field + " must be at least 1, got " + std::to_string(v));
  };
  positive(voltage_len, "voltage_len");
  positive(deform_rows, "deform_shape[0]");
  positive(deform_cols, "deform_shape[1]");
  for (int i = 0; i < 3; ++i) positive(mlp_widths[i], "mlp_widths[" + std::to_string(i) + "]");
  for (int i = 0; i < 3; ++i) positive(conv1d_channels[i], "conv1d_channels[" + std::to_string(i) + "]");
  for (int i = 0; i < 2; ++i) positive(conv2d_channels[i], "conv2d_channels[" + std::to_string(i) + "]");
  for (int i = 0; i < 2; ++i) positive(fusion_widths[i], "fusion_widths[" + std::to_string(i) + "]");
  positive(conv1d_kernel, "conv1d_kernel");
  positive(conv2d_kernel, "conv2d_kernel");
  positive(conv2d_stride, "conv2d_stride");
  // Same-size padding needs an odd kernel.
  if (conv1d_kernel % 2 == 0) throw ConfigError("model.conv1d_kernel must be odd");
  if (conv2d_kernel % 2 == 0) throw ConfigError("model.conv2d_kernel must be odd");
  if (output_len != 1350) throw ConfigError("model.output_len must be 1350, got " + std::to_string(output_len));
  if (fusion_widths[1] != output_len)
    throw ConfigError("model.fusion_widths[1] must equal output_len (" + std::to_string(output_len) + ")");
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("model.dropout_p must lie in [0, 1)");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("model.lr must be positive and finite");
  if (batch_size < 2) throw ConfigError("model.batch_size must be at least 2");
  positive(epochs, "epochs");
}

std::string to_json(const Vd2tConfig& c) {
  json j;
  j["voltage_len"] = c.voltage_len;
  j["deform_shape"] = {c.deform_rows, c.deform_cols};
  j["mlp_widths"] = c.mlp_widths;
  j["conv1d_channels"] = c.conv1d_channels;
  j["conv1d_kernel"] = c.conv1d_kernel;
  j["conv2d_channels"] = c.conv2d_channels;
  j["conv2d_kernel"] = c.conv2d_kernel;
  j["conv2d_stride"] = c.conv2d_stride;
  j["fusion_widths"] = c.fusion_widths;
  j["output_len"] = c.output_len;
  j["pooling"] = to_string(c.pooling);
  j["dropout_p"] = c.dropout_p;
  j["lr"] = c.lr;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  return j.dump();
}

Vd2tConfig vd2t_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model block is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model block must be a JSON object");
  Vd2tConfig c;
  for (const auto& [key, v] : j.items()) {
    try {
      if (key == "voltage_len") c.voltage_len = v.get<int>();
      else if (key == "deform_shape") {
        const auto s = v.get<std::array<int, 2>>();
        c.deform_rows = s[0];
        c.deform_cols = s[1];
      } else if (key == "mlp_widths") c.mlp_widths = v.get<std::array<int, 3>>();
      else if (key == "conv1d_channels") c.conv1d_channels = v.get<std::array<int, 3>>();
      else if (key == "conv1d_kernel") c.conv1d_kernel = v.get<int>();
      else if (key == "conv2d_channels") c.conv2d_channels = v.get<std::array<int, 2>>();
      else if (key == "conv2d_kernel") c.conv2d_kernel = v.get<int>();
      else if (key == "conv2d_stride") c.conv2d_stride = v.get<int>();
      else if (key == "fusion_widths") c.fusion_widths = v.get<std::array<int, 2>>();
      else if (key == "output_len") c.output_len = v.get<int>();
      else if (key == "pooling") c.pooling = voltage_pooling_from_string(v.get<std::string>());
      else if (key == "dropout_p") c.dropout_p = v.get<double>();
      else if (key == "lr") c.lr = v.get<double>();
      else if (key == "batch_size") c.batch_size = v.get<int>();
      else if (key == "epochs") c.epochs = v.get<int>();
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else throw ConfigError("unknown key 'model." + key + "'");
    } catch (const json::exception& e) {
      throw ConfigError("bad value for 'model." + key + "': " + e.what());
    }
  }
  c.validate();
  return c;
}

// ------------------------------------------------------------------ model

Vd2tModel::Vd2tModel(const Vd2tConfig& c) : config_(c) {
  c.validate();
  nn::Rng rng(c.seed);
  dropout_rng_.seed(c.seed ^ 0x9e3779b97f4a7c15ULL);

  auto linear = [&](nn::Sequential& s, const std::string& name, int in, int out) {
    auto l = std::make_unique<nn::Linear>(name, in, out);
    l->init(rng);
    s.add(std::move(l));
  };

  // Voltage branch: MLP, then the last hidden vector as a 1-channel sequence.
  int width = c.voltage_len;
  for (int i = 0; i < 3; ++i) {
    const std::string tag = std::to_string(i + 1);
    linear(voltage_, "mlp" + tag, width, c.mlp_widths[i]);
    voltage_.add(std::make_unique<nn::BatchNorm>("mlp" + tag + ".bn", c.mlp_widths[i]));
    voltage_.add(std::make_unique<nn::Relu>("mlp" + tag + ".relu", c.mlp_widths[i]));
    width = c.mlp_widths[i];
  }
  const int seq = c.mlp_widths[2];
  int channels = 1;
  for (int i = 0; i < 3; ++i) {
    const std::string tag = "conv1d" + std::to_string(i + 1);
    auto conv = std::make_unique<nn::Conv1d>(tag, channels, c.conv1d_channels[i], seq, c.conv1d_kernel,
                                             c.conv1d_kernel / 2);
    conv->init(rng);
    voltage_.add(std::move(conv));
    channels = c.conv1d_channels[i];
    voltage_.add(std::make_unique<nn::Relu>(tag + ".relu", channels * seq));
  }
  if (c.pooling == VoltagePooling::kAverage)
    voltage_.add(std::make_unique<nn::GlobalAvgPool1d>("pool1d", channels, seq));

  // Deformation branch.
  int h = c.deform_rows, w = c.deform_cols;
  channels = 1;
  for (int i = 0; i < 2; ++i) {
    const std::string tag = "conv2d" + std::to_string(i + 1);
    auto conv = std::make_unique<nn::Conv2d>(tag, channels, c.conv2d_channels[i], h, w, c.conv2d_kernel,
                                             c.conv2d_stride, c.conv2d_kernel / 2);
    conv->init(rng);
    h = conv->out_height();
    w = conv->out_width();
    channels = c.conv2d_channels[i];
    deform_.add(std::move(conv));
    deform_.add(std::make_unique<nn::Relu>(tag + ".relu", channels * h * w));
  }

  // Fusion head; the sigmoid is applied outside so backward starts at the logits.
  const int fused = voltage_.out_size() + deform_.out_size();
  linear(fusion_, "fusion1", fused, c.fusion_widths[0]);
  fusion_.add(std::make_unique<nn::BatchNorm>("fusion1.bn", c.fusion_widths[0]));
  fusion_.add(std::make_unique<nn::Relu>("fusion1.relu", c.fusion_widths[0]));
  fusion_.add(std::make_unique<nn::Dropout>("fusion1.dropout", c.fusion_widths[0], c.dropout_p, &dropout_rng_));
  linear(fusion_, "fusion2", c.fusion_widths[0], c.fusion_widths[1]);

  norm_.dv_mean = Eigen::VectorXd::Zero(c.voltage_len);
  norm_.dv_scale = Eigen::VectorXd::Ones(c.voltage_len);
  norm_.deform_scale = 1.0;
}

namespace {

double sigmoid(double x) {
  double s;
  if (x >= 0.0) {
    s = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    s = e / (1.0 + e);
  }
  return std::clamp(s, 1e-15, 1.0 - 1e-15);
}

}  // namespace

Mat Vd2tModel::forward(const Mat& dv, const Mat& deform, bool training) {
  const int d_len = config_.deform_rows * config_.deform_cols;
  if (dv.rows() != config_.voltage_len)
    throw InvalidArgument("voltage input has " + std::to_string(dv.rows()) + " rows, expected " +
                          std::to_string(config_.voltage_len));
  if (deform.rows() != d_len)
    throw InvalidArgument("deformation input has " + std::to_string(deform.rows()) + " rows, expected " +
                          std::to_string(d_len));
  if (dv.cols() != deform.cols() || dv.cols() == 0)
    throw InvalidArgument("voltage and deformation batches differ in size or are empty");

  const Mat v = ((dv.colwise() - norm_.dv_mean).array().colwise() / norm_.dv_scale.array()).matrix();
  const Mat fv = voltage_.forward(v, training);
  const Mat fd = deform_.forward(deform / norm_.deform_scale, training);
  Mat z(fv.rows() + fd.rows(), fv.cols());
  z << fv, fd;
  const Mat logits = fusion_.forward(z, training);
  return logits.unaryExpr(&sigmoid);
}

void Vd2tModel::backward(const Mat& dlogits) {
  const Mat dz = fusion_.backward(dlogits);
  const int nv = voltage_.out_size();
  voltage_.backward(dz.topRows(nv));
  deform_.backward(dz.bottomRows(dz.rows() - nv));
}

std::vector<nn::Param> Vd2tModel::params() {
  std::vector<nn::Param> out;
  for (auto* s : {&voltage_, &deform_, &fusion_}) {
    auto p = s->params();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

std::vector<nn::Param> Vd2tModel::buffers() {
  std::vector<nn::Param> out;
  for (auto* s : {&voltage_, &deform_, &fusion_}) {
    auto p = s->buffers();
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

long Vd2tModel::parameter_count() {
  long n = 0;
  for (const auto& p : params()) n += static_cast<long>(p.value->size());
  return n;
}

// ------------------------------------------------------------------- loss

double bce_loss(const Mat& pred, const Mat& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InvalidArgument("prediction and target shapes differ");
  if (pred.size() == 0) throw InvalidArgument("empty prediction");
  double s = 0.0;
  for (Eigen::Index j = 0; j < pred.cols(); ++j)
    for (Eigen::Index i = 0; i < pred.rows(); ++i) {
      const double p = std::clamp(pred(i, j), 1e-7, 1.0 - 1e-7);
      const double y = target(i, j);
      s += y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
  return -s / static_cast<double>(pred.size());
}

void Vd2tData::validate(const Vd2tConfig& c) const {
  if (dv.rows() != c.voltage_len) throw InvalidArgument("dataset voltage length does not match the model");
  if (deform.rows() != c.deform_rows * c.deform_cols)
    throw InvalidArgument("dataset descriptor size does not match the model");
  if (target.rows() != c.output_len) throw InvalidArgument("dataset target length does not match the model");
  if (deform.cols() != dv.cols() || target.cols() != dv.cols())
    throw InvalidArgument("dataset arrays hold different sample counts");
  if (!dv.allFinite() || !deform.allFinite() || !target.allFinite())
    throw NumericalError("dataset contains non-finite values");
}

double loss_and_gradient(Vd2tModel& m, const Mat& dv, const Mat& deform, const Mat& target,
                         std::uint64_t mask_seed) {
  m.reseed_dropout(mask_seed);
  const Mat p = m.forward(dv, deform, true);
  const double loss = bce_loss(p, target);
  m.backward((p - target) / static_cast<double>(p.size()));
  return loss;
}

double batch_loss(Vd2tModel& m, const Mat& dv, const Mat& deform, const Mat& target, bool training,
                  std::uint64_t mask_seed) {
  m.reseed_dropout(mask_seed);
  return bce_loss(m.forward(dv, deform, training), target);
}

// --------------------------------------------------------------- training

std::pair<std::vector<int>, std::vector<int>> split_indices(int n, std::uint64_t seed) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  // Explicit Fisher-Yates: std::shuffle's draw pattern is implementation-defined.
  nn::Rng rng(seed ^ 0x5851f42d4c957f2dULL);
  for (int i = n - 1; i > 0; --i) std::swap(idx[i], idx[rng() % static_cast<std::uint64_t>(i + 1)]);
  const int n_val = (n + 9) / 10;
  std::vector<int> val(idx.begin(), idx.begin() + n_val);
  std::vector<int> tr(idx.begin() + n_val, idx.end());
  std::sort(val.begin(), val.end());
  std::sort(tr.begin(), tr.end());
  return {tr, val};
}

double evaluate_loss(Vd2tModel& m, const Vd2tData& data, const std::vector<int>& idx) {
  if (idx.empty()) throw InvalidArgument("empty evaluation set");
  constexpr std::size_t kChunk = 512;
  double total = 0.0;
  for (std::size_t s = 0; s < idx.size(); s += kChunk) {
    const std::vector<int> part(idx.begin() + s, idx.begin() + std::min(idx.size(), s + kChunk));
    total += batch_loss(m, data.dv(Eigen::all, part), data.deform(Eigen::all, part), data.target(Eigen::all, part),
                        false) *
             static_cast<double>(part.size());
  }
  return total / static_cast<double>(idx.size());
}

namespace {

void fit_input_norm(InputNorm& norm, const Vd2tData& data, const std::vector<int>& idx) {
  const Mat dv = data.dv(Eigen::all, idx);
  norm.dv_mean = dv.rowwise().mean();
  const Mat c = dv.colwise() - norm.dv_mean;
  norm.dv_scale = (c.array().square().rowwise().sum() / static_cast<double>(idx.size())).sqrt();
  for (Eigen::Index i = 0; i < norm.dv_scale.size(); ++i)
    if (!(norm.dv_scale[i] > 1e-12)) norm.dv_scale[i] = 1.0;
  const Mat d = data.deform(Eigen::all, idx);
  const double rms = std::sqrt(d.squaredNorm() / static_cast<double>(d.size()));
  norm.deform_scale = rms > 1e-12 ? rms : 1.0;
}

struct Snapshot {
  std::vector<Mat> values;

  static Snapshot take(Vd2tModel& m) {
    Snapshot s;
    for (const auto& p : m.params()) s.values.push_back(*p.value);
    for (const auto& p : m.buffers()) s.values.push_back(*p.value);
    return s;
  }
  void restore(Vd2tModel& m) const {
    std::size_t k = 0;
    for (const auto& p : m.params()) *p.value = values[k++];
    for (const auto& p : m.buffers()) *p.value = values[k++];
  }
};

}  // namespace

TrainReport train(Vd2tModel& m, const Vd2tData& data, const EpochCallback& on_epoch) {
  const Vd2tConfig& c = m.config();
  data.validate(c);
  auto [tr, val] = split_indices(data.size(), c.seed);
  if (tr.size() < 2 || val.empty())
    throw InvalidArgument("dataset of " + std::to_string(data.size()) + " samples leaves an empty split");

  TrainReport report;
  report.n_train = static_cast<int>(tr.size());
  report.n_val = static_cast<int>(val.size());
  fit_input_norm(m.input_norm(), data, tr);

  nn::Adam adam;
  nn::Rng rng(c.seed ^ 0xd1b54a32d192ed03ULL);
  const auto params = m.params();
  long step = 0;
  Snapshot best;
  report.best_val_loss = std::numeric_limits<double>::infinity();

  for (int epoch = 1; epoch <= c.epochs; ++epoch) {
    try {
      for (int i = static_cast<int>(tr.size()) - 1; i > 0; --i)
        std::swap(tr[i], tr[rng() % static_cast<std::uint64_t>(i + 1)]);
      double sum = 0.0;
      std::size_t seen = 0;
      for (std::size_t s = 0; s < tr.size(); s += static_cast<std::size_t>(c.batch_size)) {
        const std::vector<int> b(tr.begin() + s, tr.begin() + std::min(tr.size(), s + c.batch_size));
        // Batch normalisation needs two samples.
        if (b.size() < 2) break;
        const double loss = loss_and_gradient(m, data.dv(Eigen::all, b), data.deform(Eigen::all, b),
                                              data.target(Eigen::all, b), rng());
        if (!std::isfinite(loss)) throw NumericalError("non-finite training loss");
        adam.step(params, c.lr, ++step);
        sum += loss * static_cast<double>(b.size());
        seen += b.size();
      }
      const double train_loss = sum / static_cast<double>(seen);
      const double val_loss = evaluate_loss(m, data, val);
      if (!std::isfinite(val_loss)) throw NumericalError("non-finite validation loss");
      report.train_loss.push_back(train_loss);
      report.val_loss.push_back(val_loss);
      if (val_loss < report.best_val_loss) {
        report.best_val_loss = val_loss;
        report.best_epoch = epoch;
        best = Snapshot::take(m);
      }
      if (on_epoch) on_epoch(epoch, train_loss, val_loss);
    } catch (const NumericalError& e) {
      throw NumericalError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
    }
  }
  best.restore(m);
  return report;
}

// ------------------------------------------------------------- prediction

TactileMap predict_map(Vd2tModel& m, const Eigen::VectorXd& dv, const DeformationDescriptor& d,
                       const Lattice& lattice) {
  const Vd2tConfig& c = m.config();
  if (d.heights.rows() != c.deform_rows || d.heights.cols() != c.deform_cols)
    throw InvalidArgument("descriptor is " + std::to_string(d.heights.rows()) + "x" +
                          std::to_string(d.heights.cols()) + ", model expects " + std::to_string(c.deform_rows) +
                          "x" + std::to_string(c.deform_cols));
  if (lattice.size() != c.output_len)
    throw InvalidArgument("lattice has " + std::to_string(lattice.size()) + " points, model outputs " +
                          std::to_string(c.output_len));
  TactileMap map;
  map.lattice = lattice;
  map.delta_sigma = m.forward(dv, d.flatten(), false).col(0);
  return map;
}

TactileMap predict_map(Vd2tModel& m, const MeasurementFrame& touched, const MeasurementFrame& reference,
                       const DeformationDescriptor& d, const Lattice& lattice) {
  if (reference.kind != FrameKind::kReferenceFlat) throw ConfigError("VD2T requires the flat reference");
  return predict_map(m, normalized_difference(touched, reference), d, lattice);
}

}  // namespace eskin
