#include "urbanstep/log.hpp"

#include <iostream>
#include <mutex>

namespace urbanstep {

namespace {

std::mutex& sink_mutex() {
  static std::mutex m;
  return m;
}

LogSink& sink() {
  static LogSink s = [](std::string_view msg) { std::cerr << "warning: " << msg << '\n'; };
  return s;
}

}  // namespace

LogSink set_warning_sink(LogSink next) {
  std::lock_guard lock(sink_mutex());
  LogSink prev = std::move(sink());
  sink() = std::move(next);
  return prev;
}

void log_warning(std::string_view message) {
  std::lock_guard lock(sink_mutex());
  if (sink()) sink()(message);
}

}  // namespace urbanstep
