#include "dig/log.hpp"

#include <atomic>
#include <iostream>
#include <mutex>

namespace dig {

namespace {
std::atomic<int> g_verbosity{1};
std::mutex g_mutex;
}  // namespace

void set_verbosity(int level) { g_verbosity = level; }
int verbosity() { return g_verbosity; }

void log_info(const std::string& message) {
  if (g_verbosity <= 0) return;
  std::lock_guard lock(g_mutex);
  std::cerr << message << '\n';
}

void log_warning(const std::string& message) {
  std::lock_guard lock(g_mutex);
  std::cerr << "warning: " << message << '\n';
}

}  // namespace dig
