#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace capfuse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// dataset -------------------------------------------------------------------

class MalformedRow : public Error {
public:
  MalformedRow(std::size_t line, const std::string& why)
      : Error("malformed row at line " + std::to_string(line) + ": " + why), line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

class UnknownClassName : public Error {
public:
  explicit UnknownClassName(const std::string& name)
      : Error("unknown class name '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

private:
  std::string name_;
};

class DuplicateSampleId : public Error {
public:
  explicit DuplicateSampleId(const std::string& id)
      : Error("duplicate sample_id '" + id + "'"), id_(id) {}
  const std::string& id() const { return id_; }

private:
  std::string id_;
};

class MixedTasks : public Error {
public:
  using Error::Error;
};

class InvalidTask : public Error {
public:
  using Error::Error;
};

// captioning ----------------------------------------------------------------

class BackendFailure : public Error {
public:
  BackendFailure(const std::string& backend_id, const std::string& cause)
      : Error("backend '" + backend_id + "' failed: " + cause), backend_id_(backend_id) {}
  const std::string& backend_id() const { return backend_id_; }

private:
  std::string backend_id_;
};

class UnreadableImage : public Error {
public:
  explicit UnreadableImage(const std::string& path, const std::string& why = "cannot read")
      : Error("unreadable image '" + path + "': " + why), path_(path) {}
  const std::string& path() const { return path_; }

private:
  std::string path_;
};

class EmptyPhraseBank : public Error {
public:
  EmptyPhraseBank() : Error("phrase bank is empty") {}
};

class CacheCorrupt : public Error {
public:
  CacheCorrupt(std::size_t line, const std::string& why)
      : Error("caption cache corrupt at line " + std::to_string(line) + ": " + why), line_(line) {}
  std::size_t line() const { return line_; }

private:
  std::size_t line_;
};

// classification ------------------------------------------------------------

class MissingClassInTrain : public Error {
public:
  explicit MissingClassInTrain(const std::string& class_name)
      : Error("training split has no sample of class '" + class_name + "'"),
        class_name_(class_name) {}
  const std::string& class_name() const { return class_name_; }

private:
  std::string class_name_;
};

class ModalityMismatch : public Error {
public:
  using Error::Error;
};

class NotTrained : public Error {
public:
  NotTrained() : Error("model has not been trained") {}
};

class MissingCaption : public Error {
public:
  explicit MissingCaption(std::vector<std::string> ids)
      : Error(describe(ids)), ids_(std::move(ids)) {}
  const std::vector<std::string>& sample_ids() const { return ids_; }

private:
  static std::string describe(const std::vector<std::string>& ids) {
    std::string s = "missing caption for " + std::to_string(ids.size()) + " sample(s):";
    for (const auto& id : ids) s += " " + id;
    return s;
  }
  std::vector<std::string> ids_;
};

class InvalidProbVector : public Error {
public:
  using Error::Error;
};

// fusion / evaluation ---------------------------------------------------------

class LengthMismatch : public Error {
public:
  using Error::Error;
};

class WeightOutOfRange : public Error {
public:
  explicit WeightOutOfRange(double w)
      : Error("fusion weight " + std::to_string(w) + " outside [0, 1]") {}
};

class SampleSetMismatch : public Error {
public:
  SampleSetMismatch(std::vector<std::string> only_image, std::vector<std::string> only_text)
      : Error(describe(only_image, only_text)),
        only_image_(std::move(only_image)),
        only_text_(std::move(only_text)) {}
  const std::vector<std::string>& only_in_image() const { return only_image_; }
  const std::vector<std::string>& only_in_text() const { return only_text_; }

private:
  static std::string describe(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
    std::string s = "sample sets differ;";
    s += " only in image matrix:";
    for (const auto& id : a) s += " " + id;
    s += "; only in text matrix:";
    for (const auto& id : b) s += " " + id;
    return s;
  }
  std::vector<std::string> only_image_;
  std::vector<std::string> only_text_;
};

class GridMismatch : public Error {
public:
  using Error::Error;
};

class InvalidGrid : public Error {
public:
  using Error::Error;
};

class EmptyInput : public Error {
public:
  using Error::Error;
};

class IndexOutOfRange : public Error {
public:
  using Error::Error;
};

// cli -----------------------------------------------------------------------

class ConfigError : public Error {
public:
  using Error::Error;
};

}  // namespace capfuse
