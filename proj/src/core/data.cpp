#include "dag_grow/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <sstream>

namespace daggrow {

std::array<std::vector<Eigen::Index>, 3> split_indices(Eigen::Index n, std::uint64_t seed) {
  if (n < 3) throw DataError("need at least 3 training samples to split, got " + std::to_string(n));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::array<std::vector<Eigen::Index>, 3> parts;
  const Eigen::Index base = n / 3, rem = n % 3;
  auto it = order.begin();
  for (Eigen::Index i = 0; i < 3; ++i) {
    const Eigen::Index size = base + (i < rem ? 1 : 0);
    parts[static_cast<std::size_t>(i)].assign(it, it + size);
    it += size;
  }
  return parts;
}

DatasetSplits split_dataset(const LabeledData& train, LabeledData test, std::uint64_t seed) {
  if (train.inputs.rows() != train.targets.rows())
    throw DataError("inputs and targets have different row counts");
  auto parts = split_indices(train.size(), seed);
  DatasetSplits s;
  s.train_opt = select_rows(train, parts[0]);
  s.train_ls = select_rows(train, parts[1]);
  s.train_gr = select_rows(train, parts[2]);
  s.test = std::move(test);
  return s;
}

// ---------------------------------------------------------------------------

DagNetwork make_teacher(std::uint64_t seed, const TeacherOptions& options) {
  const int d = options.input_width, h = options.hidden_width;
  DagNetwork net;
  const NodeId in = net.add_node_raw({NodeId{0}, d, Activation::identity, 0});
  const NodeId out = net.add_node_raw({NodeId{1}, 1, Activation::identity, 3});
  const NodeId h1 = net.add_node_raw({NodeId{2}, h, options.activation, 1});
  const NodeId h2 = net.add_node_raw({NodeId{3}, h, options.activation, 2});
  net.set_io(in, out);

  std::mt19937_64 rng(seed);
  auto init = [&](NodeId src, NodeId dst) {
    const int fan_in = net.node(src).width, rows = net.node(dst).width;
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    Matrix w(rows, fan_in);
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = u(rng);
    Vector b(rows);
    for (Eigen::Index r = 0; r < rows; ++r) b(r) = u(rng);
    net.add_edge(src, dst, std::move(w), std::move(b));
  };
  init(in, h1);
  init(h1, h2);
  init(in, h2);
  init(h2, out);
  return net;
}

LabeledData gen_teacher_data(const DagNetwork& teacher, Eigen::Index n, std::uint64_t seed,
                             double bound) {
  if (n < 4) throw DataError("teacher data needs at least 4 samples, got " + std::to_string(n));
  if (!(bound > 0.0)) throw UsageError("input bound must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-bound, bound);
  LabeledData data;
  data.inputs.resize(n, teacher.node(teacher.input_id()).width);
  for (Eigen::Index r = 0; r < data.inputs.rows(); ++r)
    for (Eigen::Index c = 0; c < data.inputs.cols(); ++c) data.inputs(r, c) = u(rng);
  data.targets = outputs(teacher, forward(teacher, data.inputs));
  return data;
}

// ---------------------------------------------------------------------------

std::string_view to_string(IdxErrorCode code) {
  switch (code) {
    case IdxErrorCode::io: return "io";
    case IdxErrorCode::bad_magic: return "bad magic";
    case IdxErrorCode::truncated: return "truncated";
    case IdxErrorCode::dimension_overflow: return "dimension overflow";
  }
  return "?";
}

namespace {

std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

}  // namespace

IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) throw IdxError(IdxErrorCode::truncated, "IDX: truncated header");
  const std::uint32_t magic = read_be32(bytes, 0);
  const std::uint32_t ndims = magic & 0xFF;
  if ((magic & 0xFFFFFF00u) != 0x00000800u || ndims < 1 || ndims > 4) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "IDX: bad magic 0x%08X", magic);
    throw IdxError(IdxErrorCode::bad_magic, buf);
  }
  const std::size_t header = 4 + 4 * static_cast<std::size_t>(ndims);
  if (bytes.size() < header) throw IdxError(IdxErrorCode::truncated, "IDX: truncated dimension list");
  IdxTensor t;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < ndims; ++i) {
    const std::uint32_t dim = read_be32(bytes, 4 + 4 * i);
    t.dims.push_back(dim);
    if (dim != 0 && count > kIdxMaxElements / dim)
      throw IdxError(IdxErrorCode::dimension_overflow, "IDX: declared size overflows");
    count *= dim;
  }
  if (count > kIdxMaxElements)
    throw IdxError(IdxErrorCode::dimension_overflow, "IDX: declared size overflows");
  if (bytes.size() - header < count)
    throw IdxError(IdxErrorCode::truncated,
                   "IDX: truncated payload (declared " + std::to_string(count) + " bytes, found " +
                       std::to_string(bytes.size() - header) + ")");
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header),
                bytes.begin() + static_cast<std::ptrdiff_t>(header + count));
  return t;
}

IdxTensor load_idx(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxErrorCode::io, "cannot open IDX file '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return parse_idx(bytes);
  } catch (const IdxError& e) {
    throw IdxError(e.code(), path + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_idx(const IdxTensor& t) {
  if (t.dims.empty() || t.dims.size() > 4) throw UsageError("IDX tensors have 1 to 4 dimensions");
  std::uint64_t count = 1;
  for (auto d : t.dims) count *= d;
  if (count != t.data.size()) throw UsageError("IDX dims do not match the payload size");
  std::vector<std::uint8_t> out;
  write_be32(out, 0x00000800u | static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) write_be32(out, d);
  out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

void write_idx(const IdxTensor& tensor, const std::string& path) {
  const auto bytes = encode_idx(tensor);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

LabeledData mnist_from_idx(const IdxTensor& images, const IdxTensor& labels, Eigen::Index limit) {
  if (images.dims.size() != 3) throw DataError("MNIST images must be a 3-D IDX tensor");
  if (labels.dims.size() != 1) throw DataError("MNIST labels must be a 1-D IDX tensor");
  if (images.dims[0] != labels.dims[0])
    throw DataError("MNIST image and label counts differ");
  Eigen::Index n = images.dims[0];
  if (limit > 0) n = std::min(n, limit);
  const Eigen::Index pixels = Eigen::Index{images.dims[1]} * images.dims[2];
  LabeledData data;
  data.inputs.resize(n, pixels);
  data.targets = Matrix::Zero(n, 10);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index p = 0; p < pixels; ++p)
      data.inputs(i, p) = images.data[static_cast<std::size_t>(i * pixels + p)] / 255.0;
    const auto label = labels.data[static_cast<std::size_t>(i)];
    if (label > 9) throw DataError("MNIST label out of range: " + std::to_string(label));
    data.targets(i, label) = 1.0;
  }
  return data;
}

LabeledData load_mnist(const std::string& dir, bool train, Eigen::Index limit) {
  namespace fs = std::filesystem;
  const fs::path images = fs::path(dir) / (train ? kMnistTrainImages : kMnistTestImages);
  const fs::path labels = fs::path(dir) / (train ? kMnistTrainLabels : kMnistTestLabels);
  if (!fs::exists(images) || !fs::exists(labels)) {
    throw DataError("MNIST files not found in '" + dir + "'; expected " + kMnistTrainImages + ", " +
                    kMnistTrainLabels + ", " + kMnistTestImages + " and " + kMnistTestLabels +
                    " (uncompressed IDX; set --data-dir or DAG_GROW_DATA)");
  }
  return mnist_from_idx(load_idx(images.string()), load_idx(labels.string()), limit);
}

// ---------------------------------------------------------------------------

LabeledData load_csv(const std::string& path, int target_cols) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open CSV file '" + path + "'");
  if (target_cols < 1) throw UsageError("--target-cols must be >= 1");
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty file");
  const auto header_cols = static_cast<int>(std::count(line.begin(), line.end(), ',') + 1);
  if (header_cols <= target_cols)
    throw DataError(path + ": need more columns than --target-cols");
  std::vector<std::vector<double>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str())
        throw DataError(path + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
      row.push_back(v);
    }
    if (static_cast<int>(row.size()) != header_cols)
      throw DataError(path + ":" + std::to_string(line_no) + ": expected " +
                      std::to_string(header_cols) + " columns");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw DataError(path + ": no data rows");
  const int features = header_cols - target_cols;
  LabeledData data;
  data.inputs.resize(static_cast<Eigen::Index>(rows.size()), features);
  data.targets.resize(static_cast<Eigen::Index>(rows.size()), target_cols);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int c = 0; c < header_cols; ++c) {
      if (c < features)
        data.inputs(static_cast<Eigen::Index>(r), c) = rows[r][static_cast<std::size_t>(c)];
      else
        data.targets(static_cast<Eigen::Index>(r), c - features) = rows[r][static_cast<std::size_t>(c)];
    }
  return data;
}

}  // namespace daggrow
