#include "agg/error.hpp"

namespace agg {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::input: return "input";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::schedule: return "schedule";
    case ErrorKind::resource: return "resource";
    case ErrorKind::parse: return "parse";
    case ErrorKind::config: return "config";
    case ErrorKind::undefined_metric: return "undefined_metric";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, std::string(to_string(kind)) + " error: " + message);
}

}  // namespace agg
