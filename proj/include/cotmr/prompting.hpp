#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "cotmr/chat.hpp"

namespace cotmr {

enum class Scale { image, object };

enum class PromptMode { no_cot, circot_zero_shot, circot_few_shot };

std::string_view to_string(Scale scale);
Scale parse_scale(std::string_view name);

// CLI spellings: no-cot | circot-0 | circot-fs.
std::string_view to_string(PromptMode mode);
PromptMode parse_prompt_mode(std::string_view name);

inline constexpr std::string_view kPromptFormatVersion = "cotmr-prompt-v1";

struct PromptTemplate {
  Scale scale = Scale::image;
  std::string system_text;
  std::string task_text;         // CIRCoT task statement
  std::string merged_task_text;  // task statement for single-call reasoning
  std::string direct_text;       // no-CoT task statement
  std::vector<std::string> subtask_headers;
  std::vector<std::string> step_instructions;
  std::vector<std::string> worked_examples;
  std::string output_contract;
};

// Required subtask headers, in order.
const std::vector<std::string>& subtask_headers(Scale scale);

// Parses a template file and its worked-example file (both "cotmr-prompt-v1").
// Throws Error{MalformedRecord} on a bad version line, unknown section, or
// headers that differ from subtask_headers(scale).
PromptTemplate parse_prompt_template(Scale scale, std::string_view template_text, std::string_view examples_text);

class PromptLibrary {
 public:
  // The template files compiled into the library.
  static const PromptLibrary& builtin();
  // Reads {image,object}_scale.txt and {image,object}_examples.txt from dir.
  static PromptLibrary load(const std::filesystem::path& dir);

  // Template as instantiated for a mode: worked_examples are empty unless
  // mode == circot_few_shot.
  PromptTemplate instantiate(Scale scale, PromptMode mode) const;

 private:
  PromptTemplate image_;
  PromptTemplate object_;
};

// Terminal marker grammar the reply must end with.
std::string output_contract(Scale scale);
// Contract for single-call reasoning: all three markers.
std::string merged_output_contract();

inline constexpr std::string_view kCaptionMarker = "FINAL_CAPTION:";
inline constexpr std::string_view kExistentMarker = "EXISTENT_OBJECTS:";
inline constexpr std::string_view kNonexistentMarker = "NONEXISTENT_OBJECTS:";

// Request for one reasoning pass. Pure: identical inputs give identical requests.
ChatRequest build_prompt(Scale scale, PromptMode mode, const std::string& reference_image,
                         const std::string& modification_text,
                         const PromptLibrary& library = PromptLibrary::builtin());

// Single-call variant that asks for the caption and both object lists at once;
// reasoning follows the image-scale subtasks.
ChatRequest build_merged_prompt(PromptMode mode, const std::string& reference_image,
                                const std::string& modification_text,
                                const PromptLibrary& library = PromptLibrary::builtin());

}  // namespace cotmr
