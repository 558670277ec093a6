#include "bgm/checkpoint.hpp"

#include <chrono>
#include <cstdint>
#include <cstring>
#include <ctime>
#include <fstream>
#include <iterator>
#include <sstream>

namespace bgm {

namespace {

constexpr const char* kMagic = "BGM-CHECKPOINT";

void put_f64(std::string& out, double v) {
  std::uint64_t bits = 0;
  std::memcpy(&bits, &v, sizeof bits);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFFu));
}

double get_f64(const std::string& in, std::size_t pos) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + b])) << (8 * b);
  double v = 0.0;
  std::memcpy(&v, &bits, sizeof v);
  return v;
}

std::string timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::size_t header_end(const std::string& bytes) {
  const std::size_t first = bytes.find('\n');
  if (first == std::string::npos || bytes.compare(0, first, kMagic) != 0)
    throw InputError("not a BGM checkpoint (bad magic)");
  const std::size_t second = bytes.find('\n', first + 1);
  if (second == std::string::npos) throw InputError("truncated checkpoint header");
  return second + 1;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  const DenseNet& net = ckpt.model.net;
  const std::size_t d = net.num_params();
  if (ckpt.model.vp.mu.size() != d || ckpt.model.vp.rho.size() != d)
    throw ConfigError("checkpoint: variational parameters do not match the network");
  if (static_cast<std::size_t>(ckpt.latents.cols()) != net.input_dim() && ckpt.latents.size() != 0)
    throw ConfigError("checkpoint: latent table width does not match d_z");

  nlohmann::json h;
  h["format_version"] = kCheckpointVersion;
  h["created"] = ckpt.created.empty() ? timestamp() : ckpt.created;
  h["layer_dims"] = net.layer_dims();
  h["hidden"] = net.hidden();
  h["d_z"] = net.input_dim();
  h["p"] = net.output_dim();
  h["num_params"] = d;
  h["column_means"] = ckpt.stats.means;
  h["column_stds"] = ckpt.stats.stds;
  h["column_names"] = ckpt.stats.names;
  const DecoderConfig& dec = ckpt.model.decoder;
  h["decoder"] = {{"variance_floor", dec.variance_floor},
                  {"map_mode", dec.map_mode},
                  {"flipout", dec.flipout},
                  {"n_theta_samples", dec.n_theta_samples},
                  {"theta_prior_scale", dec.prior.theta_scale}};
  h["config"] = ckpt.config;
  h["byte_order"] = "little";
  h["arrays"] = nlohmann::json::array(
      {{{"name", "mu_phi"}, {"length", d}},
       {{"name", "rho_phi"}, {"length", d}},
       {{"name", "latents"}, {"rows", ckpt.latents.rows()}, {"cols", ckpt.latents.cols()}}});

  std::string out = std::string(kMagic) + "\n" + h.dump() + "\n";
  out.reserve(out.size() + 8 * (2 * d + static_cast<std::size_t>(ckpt.latents.size())));
  for (double v : ckpt.model.vp.mu) put_f64(out, v);
  for (double v : ckpt.model.vp.rho) put_f64(out, v);
  for (Eigen::Index i = 0; i < ckpt.latents.size(); ++i) put_f64(out, ckpt.latents.data()[i]);
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const std::size_t start = header_end(bytes);
  const std::size_t first = bytes.find('\n');
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(first + 1, start - first - 2));
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (h.value("format_version", 0) != kCheckpointVersion)
    throw InputError("unsupported checkpoint format version");

  const auto dz = h.at("d_z").get<std::size_t>();
  const auto p = h.at("p").get<std::size_t>();
  DenseNet net(dz, h.at("hidden").get<std::vector<std::size_t>>(), p);
  const std::size_t d = net.num_params();
  if (h.at("num_params").get<std::size_t>() != d)
    throw InputError("checkpoint parameter count does not match its layer_dims");
  const nlohmann::json& arrays = h.at("arrays");
  const auto rows = arrays.at(2).at("rows").get<std::size_t>();
  const auto cols = arrays.at(2).at("cols").get<std::size_t>();
  const std::size_t expected = 8 * (2 * d + rows * cols);
  if (bytes.size() - start != expected)
    throw InputError("checkpoint payload has " + std::to_string(bytes.size() - start) +
                     " bytes, expected " + std::to_string(expected));

  Checkpoint c{GenerativeModel{net, {}, {}}, {}, {}, h.value("config", nlohmann::json::object()),
               h.value("created", std::string{})};
  const nlohmann::json& dec = h.at("decoder");
  c.model.decoder.variance_floor = dec.at("variance_floor").get<double>();
  c.model.decoder.map_mode = dec.at("map_mode").get<bool>();
  c.model.decoder.flipout = dec.at("flipout").get<bool>();
  c.model.decoder.n_theta_samples = dec.at("n_theta_samples").get<std::size_t>();
  c.model.decoder.prior.theta_scale = dec.at("theta_prior_scale").get<double>();
  c.stats.means = h.at("column_means").get<std::vector<double>>();
  c.stats.stds = h.at("column_stds").get<std::vector<double>>();
  c.stats.names = h.at("column_names").get<std::vector<std::string>>();

  std::size_t pos = start;
  c.model.vp.mu.resize(d);
  c.model.vp.rho.resize(d);
  for (std::size_t i = 0; i < d; ++i, pos += 8) c.model.vp.mu[i] = get_f64(bytes, pos);
  for (std::size_t i = 0; i < d; ++i, pos += 8) c.model.vp.rho[i] = get_f64(bytes, pos);
  c.latents.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (Eigen::Index i = 0; i < c.latents.size(); ++i, pos += 8) c.latents.data()[i] = get_f64(bytes, pos);
  return c;
}

std::string checkpoint_payload(const std::string& bytes) { return bytes.substr(header_end(bytes)); }

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = encode_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint '" + path + "'");
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

}  // namespace bgm
