#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dag_grow/error.hpp"
#include "dag_grow/netdag.hpp"

namespace daggrow {

/// train_opt / train_ls / train_gr are equal thirds of the training data
/// (sizes within one sample); the test set is passed through.
struct DatasetSplits {
  LabeledData train_opt;
  LabeledData train_ls;
  LabeledData train_gr;
  LabeledData test;

  /// train_opt followed by train_ls.
  LabeledData inter_train() const { return concat(train_opt, train_ls); }
};

/// Seeded shuffle, then contiguous thirds; the remainder goes round-robin to
/// the first parts (10 -> 4/3/3).
DatasetSplits split_dataset(const LabeledData& train, LabeledData test, std::uint64_t seed);

/// Row indices of each part for a dataset of n rows.
std::array<std::vector<Eigen::Index>, 3> split_indices(Eigen::Index n, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Teacher-student regression

struct TeacherOptions {
  int input_width = 20;
  int hidden_width = 50;
  Activation activation = Activation::selu;
};

/// input -> h1 -> h2 -> output(1) plus the skip input -> h2. Every edge carries
/// its own bias; weights and biases are uniform in +-1/sqrt(fan_in).
DagNetwork make_teacher(std::uint64_t seed, const TeacherOptions& options = {});

/// Inputs uniform on [-bound, bound]^d, labels = teacher outputs.
LabeledData gen_teacher_data(const DagNetwork& teacher, Eigen::Index n, std::uint64_t seed,
                             double bound = 1.0);

// ---------------------------------------------------------------------------
// IDX files

enum class IdxErrorCode { io, bad_magic, truncated, dimension_overflow };

std::string_view to_string(IdxErrorCode code);

class IdxError : public DataError {
 public:
  IdxError(IdxErrorCode code, const std::string& what) : DataError(what), code_(code) {}
  IdxErrorCode code() const noexcept { return code_; }

 private:
  IdxErrorCode code_;
};

/// Unsigned-byte IDX tensor (magic 0x0000080N, N = number of dimensions).
struct IdxTensor {
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  friend bool operator==(const IdxTensor&, const IdxTensor&) = default;
};

/// Refuses payloads above this many bytes (dimension_overflow).
inline constexpr std::uint64_t kIdxMaxElements = std::uint64_t{1} << 34;

IdxTensor parse_idx(std::span<const std::uint8_t> bytes);
IdxTensor load_idx(const std::string& path);
std::vector<std::uint8_t> encode_idx(const IdxTensor& tensor);
void write_idx(const IdxTensor& tensor, const std::string& path);

inline constexpr const char* kMnistTrainImages = "train-images-idx3-ubyte";
inline constexpr const char* kMnistTrainLabels = "train-labels-idx1-ubyte";
inline constexpr const char* kMnistTestImages = "t10k-images-idx3-ubyte";
inline constexpr const char* kMnistTestLabels = "t10k-labels-idx1-ubyte";

/// Pixels scaled to [0, 1], labels one-hot over 10 classes. `limit` > 0 keeps
/// only the first `limit` samples.
LabeledData mnist_from_idx(const IdxTensor& images, const IdxTensor& labels, Eigen::Index limit = 0);

/// Loads "train" or "t10k" from dir; a missing file raises a DataError naming
/// all four expected file names.
LabeledData load_mnist(const std::string& dir, bool train, Eigen::Index limit = 0);

// ---------------------------------------------------------------------------
// CSV regression data

/// Header row, comma separated, the last `target_cols` columns are targets.
LabeledData load_csv(const std::string& path, int target_cols = 1);

}  // namespace daggrow
