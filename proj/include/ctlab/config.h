// Flat key=value configuration shared by config files and CLI flags.
//
//   # comment
//   countermeasure = prefetch
//   cache.line_size = 4

#ifndef CTLAB_CONFIG_H_
#define CTLAB_CONFIG_H_

#include <istream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ctlab {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class ConfigMap {
 public:
  static ConfigMap parse(std::istream& in);
  static ConfigMap load(const std::string& path);

  void set(std::string key, std::string value);
  // Applies "key=value"; throws ConfigError without '='.
  void set_assignment(std::string_view assignment);
  void merge(const ConfigMap& overrides);

  bool contains(const std::string& key) const { return values_.count(key); }
  std::optional<std::string> get(const std::string& key) const;
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ctlab

#endif  // CTLAB_CONFIG_H_
