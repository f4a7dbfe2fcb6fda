#include "finrag/prompts.hpp"

#include <map>
#include <mutex>

#include "finrag/error.hpp"
#include "finrag/util.hpp"

namespace finrag::prompts {

// Generated by CMake from data/prompts/*.txt.
struct RawPrompt {
  const char* name;
  const char* version;
  const char* text;
};
extern const RawPrompt kRawPrompts[];
extern const std::size_t kRawPromptCount;

namespace {

Template parse(const RawPrompt& raw) {
  std::string_view text = raw.text;
  constexpr std::string_view sys_tag = "[system]\n";
  constexpr std::string_view user_tag = "[user]\n";
  auto s = text.find(sys_tag);
  auto u = text.find(user_tag);
  if (s == std::string_view::npos || u == std::string_view::npos || u < s) {
    throw Error(ErrorCode::ParseError, std::string("prompt ") + raw.name + " lacks [system]/[user] sections");
  }
  Template t;
  t.name = raw.name;
  t.version = raw.version;
  t.system = trim(text.substr(s + sys_tag.size(), u - s - sys_tag.size()));
  t.user = trim(text.substr(u + user_tag.size()));
  return t;
}

const std::map<std::string, Template, std::less<>>& registry() {
  static const auto templates = [] {
    std::map<std::string, Template, std::less<>> m;
    for (std::size_t i = 0; i < kRawPromptCount; ++i) {
      auto t = parse(kRawPrompts[i]);
      m.emplace(t.name, std::move(t));
    }
    return m;
  }();
  return templates;
}

}  // namespace

const Template& get(std::string_view name) {
  const auto& reg = registry();
  auto it = reg.find(name);
  if (it == reg.end()) throw Error(ErrorCode::NotFound, "no prompt template '" + std::string(name) + "'");
  return it->second;
}

std::vector<std::string> names() {
  std::vector<std::string> out;
  for (const auto& [k, _] : registry()) out.push_back(k);
  return out;
}

std::string render(std::string_view text, const Vars& vars) {
  auto lookup = [&](std::string_view key) -> const std::string* {
    for (const auto& [k, v] : vars) {
      if (k == key) return &v;
    }
    return nullptr;
  };
  std::string out;
  for (const auto& line : split_lines(text)) {
    std::string_view l = line;
    if (l.size() > 4 && l.substr(0, 2) == "{{" && l.substr(l.size() - 2) == "}}" &&
        l.find("{{", 2) == std::string_view::npos) {
      if (const auto* v = lookup(l.substr(2, l.size() - 4)); v && v->empty()) continue;
    }
    std::size_t pos = 0;
    while (pos < l.size()) {
      auto open = l.find("{{", pos);
      if (open == std::string_view::npos) {
        out.append(l.substr(pos));
        break;
      }
      auto close = l.find("}}", open + 2);
      if (close == std::string_view::npos) {
        out.append(l.substr(pos));
        break;
      }
      out.append(l.substr(pos, open - pos));
      if (const auto* v = lookup(l.substr(open + 2, close - open - 2))) {
        out.append(*v);
      } else {
        out.append(l.substr(open, close + 2 - open));
      }
      pos = close + 2;
    }
    out += '\n';
  }
  if (!out.empty()) out.pop_back();
  return out;
}

}  // namespace finrag::prompts
