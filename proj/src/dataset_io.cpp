#include "binary_io.hpp"
#include "lieneurons/datasets.hpp"
#include "lieneurons/errors.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <sstream>

namespace lieneurons {
namespace {

using nlohmann::json;

constexpr std::string_view encoding_name(DatasetEncoding e) { return e == DatasetEncoding::Binary ? "binary" : "json"; }

json record_to_json(const DatasetRecord& r, TargetKind kind) {
  json j = {{"set_size", r.set_size}, {"channels", r.channels}, {"inputs", r.inputs}};
  switch (kind) {
    case TargetKind::Scalar: j["target"] = r.scalar_target; break;
    case TargetKind::Algebra: j["target"] = r.algebra_target; break;
    case TargetKind::Label: j["target"] = r.label; break;
  }
  if (r.conjugator) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < r.conjugator->rows(); ++i) {
      json row = json::array();
      for (Eigen::Index k = 0; k < r.conjugator->cols(); ++k) row.push_back((*r.conjugator)(i, k));
      rows.push_back(row);
    }
    j["conjugator"] = rows;
  }
  if (r.source_index) j["source_index"] = *r.source_index;
  return j;
}

DatasetRecord record_from_json(const json& j, TargetKind kind) {
  DatasetRecord r;
  r.set_size = j.at("set_size").get<std::size_t>();
  r.channels = j.at("channels").get<std::size_t>();
  r.inputs = j.at("inputs").get<std::vector<double>>();
  switch (kind) {
    case TargetKind::Scalar: r.scalar_target = j.at("target").get<double>(); break;
    case TargetKind::Algebra: r.algebra_target = j.at("target").get<std::vector<double>>(); break;
    case TargetKind::Label: r.label = j.at("target").get<int>(); break;
  }
  if (j.contains("conjugator")) {
    const auto& rows = j["conjugator"];
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.at(0).size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index k = 0; k < m.cols(); ++k) m(i, k) = rows.at(i).at(k).get<double>();
    r.conjugator = m;
  }
  if (j.contains("source_index")) r.source_index = j["source_index"].get<std::size_t>();
  return r;
}

void put_record(std::string& out, const DatasetRecord& r, TargetKind kind, std::size_t K) {
  binary::put_u64(out, r.set_size);
  binary::put_u64(out, r.channels);
  for (double v : r.inputs) binary::put_f64(out, v);
  switch (kind) {
    case TargetKind::Scalar: binary::put_f64(out, r.scalar_target); break;
    case TargetKind::Algebra:
      if (r.algebra_target.size() != K) throw FormatError("dataset: algebra target has wrong length");
      for (double v : r.algebra_target) binary::put_f64(out, v);
      break;
    case TargetKind::Label: binary::put_u64(out, static_cast<std::uint64_t>(static_cast<std::int64_t>(r.label))); break;
  }
  binary::put_u64(out, r.conjugator ? static_cast<std::uint64_t>(r.conjugator->rows()) : 0);
  if (r.conjugator)
    for (Eigen::Index i = 0; i < r.conjugator->rows(); ++i)
      for (Eigen::Index k = 0; k < r.conjugator->cols(); ++k) binary::put_f64(out, (*r.conjugator)(i, k));
  binary::put_u64(out, r.source_index ? 1 : 0);
  if (r.source_index) binary::put_u64(out, *r.source_index);
}

DatasetRecord read_record(binary::Reader& in, TargetKind kind, std::size_t K) {
  DatasetRecord r;
  r.set_size = in.u64();
  r.channels = in.u64();
  const std::size_t count = r.set_size * K * r.channels;
  if (r.set_size == 0 || r.channels == 0 || count * 8 > in.remaining()) throw FormatError("dataset: bad record header");
  r.inputs.resize(count);
  for (auto& v : r.inputs) v = in.f64();
  switch (kind) {
    case TargetKind::Scalar: r.scalar_target = in.f64(); break;
    case TargetKind::Algebra:
      r.algebra_target.resize(K);
      for (auto& v : r.algebra_target) v = in.f64();
      break;
    case TargetKind::Label: r.label = static_cast<int>(static_cast<std::int64_t>(in.u64())); break;
  }
  const auto n = static_cast<Eigen::Index>(in.u64());
  if (n > 64) throw FormatError("dataset: implausible conjugator size");
  if (n > 0) {
    Matrix m(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index k = 0; k < n; ++k) m(i, k) = in.f64();
    r.conjugator = m;
  }
  if (in.u64() != 0) r.source_index = in.u64();
  return r;
}

}  // namespace

std::string serialize_dataset(const Dataset& data, DatasetEncoding encoding) {
  json header = {{"task", to_string(data.task)}, {"algebra", data.algebra},    {"dim", data.dim},
                 {"channels", data.channels},    {"seed", data.seed},          {"metadata", data.metadata},
                 {"records", data.records.size()}, {"encoding", encoding_name(encoding)}};
  std::string out(kDatasetMagic);
  out += '\n';
  out += header.dump();
  out += '\n';
  const auto kind = data.target_kind();
  for (const auto& r : data.records) {
    if (encoding == DatasetEncoding::Json) {
      out += record_to_json(r, kind).dump();
      out += '\n';
    } else {
      put_record(out, r, kind, data.dim);
    }
  }
  return out;
}

Dataset parse_dataset(std::string_view bytes) {
  const auto magic_end = bytes.find('\n');
  if (magic_end == std::string_view::npos || bytes.substr(0, magic_end) != kDatasetMagic) {
    throw FormatError("dataset: bad magic, expected '" + std::string(kDatasetMagic) + "'");
  }
  const auto header_end = bytes.find('\n', magic_end + 1);
  if (header_end == std::string_view::npos) throw FormatError("dataset: missing header line");

  Dataset data;
  try {
    const json header = json::parse(bytes.substr(magic_end + 1, header_end - magic_end - 1));
    data.task = parse_task(header.at("task").get<std::string>());
    data.algebra = header.at("algebra").get<std::string>();
    data.dim = header.at("dim").get<std::size_t>();
    data.channels = header.at("channels").get<std::size_t>();
    data.seed = header.at("seed").get<std::uint64_t>();
    data.metadata = header.value("metadata", json::object());
    const auto count = header.at("records").get<std::size_t>();
    const auto encoding = header.at("encoding").get<std::string>();
    const auto kind = data.target_kind();
    const auto body = bytes.substr(header_end + 1);
    data.records.reserve(count);
    if (encoding == "json") {
      std::size_t pos = 0;
      while (pos < body.size()) {
        auto end = body.find('\n', pos);
        if (end == std::string_view::npos) end = body.size();
        if (end > pos) data.records.push_back(record_from_json(json::parse(body.substr(pos, end - pos)), kind));
        pos = end + 1;
      }
    } else if (encoding == "binary") {
      binary::Reader in(body);
      for (std::size_t i = 0; i < count; ++i) data.records.push_back(read_record(in, kind, data.dim));
      if (!in.done()) throw FormatError("dataset: trailing bytes after last record");
    } else {
      throw FormatError("dataset: unknown encoding '" + encoding + "'");
    }
    if (data.records.size() != count) throw FormatError("dataset: record count does not match header");
  } catch (const json::exception& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  return data;
}

void write_dataset(const Dataset& data, const std::filesystem::path& path, DatasetEncoding encoding) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write dataset " + path.string());
  const auto bytes = serialize_dataset(data, encoding);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing dataset " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open dataset " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_dataset(ss.str());
}

std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 0xf];
  }
  return out;
}

std::string file_sha256(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

}  // namespace lieneurons
