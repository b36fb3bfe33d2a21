#pragma once

#include <string>
#include <string_view>

namespace ddl::prompts {

inline constexpr std::string_view kVanilla =
    "Return bounding boxes of any abnormal areas as JSON format:\n"
    "If the image do not have the target, return the string: \"no target\".\n"
    "If detected, return a list of 2D bounding boxes around the target regions:\n"
    "[\n"
    "    {\"bbox_2d\": [x1, y1, x2, y2], \"label\": \"label\"},\n"
    "    ...\n"
    "]";

inline constexpr std::string_view kMetaInit =
    "You are an expert prompt engineer for medical imaging tasks.\n\n"
    "Task Context: Brain MRI Abnormality Grounding\n"
    "Your goal is to improve instructions for detecting and localizing pathological\n"
    "abnormalities in brain MRI scans. The model must identify abnormalities\n"
    "in the image with precise bounding box coordinates.\n\n"
    "Given the vanilla instruction below, generate 5 diverse but semantically\n"
    "equivalent variations that incorporate different prompt strategies.\n\n"
    "Each variation should:\n"
    "(1) Maintain the core abnormality grounding task\n"
    "(2) Use different linguistic patterns or reasoning approaches\n"
    "(3) Ensure JSON output format compliance\n\n"
    "Vanilla Instruction:\n"
    "    \"{VANILLA_INSTRUCTION}\"\n\n"
    "Output Format (JSON only):\n"
    "{\n"
    "  \"variant_1\": \"...\",\n"
    "  \"variant_2\": \"...\",\n"
    "  \"variant_3\": \"...\",\n"
    "  \"variant_4\": \"...\",\n"
    "  \"variant_5\": \"...\"\n"
    "}";

inline constexpr std::string_view kMetaContrastive =
    "You are analyzing prompts for medical image analysis tasks. Your task is to "
    "understand what makes some prompts work better and others worse...\n\n"
    "HIGH PERFORMANCE PROMPTS (What Works Well):\n{SUCCESS_TAIL}\n\n"
    "LOW PERFORMANCE PROMPTS (What Doesn't Work):\n{FAILURE_BULK}\n\n"
    "YOUR TASK:\n"
    "1. Analyze key differences between high and low performing prompts.\n"
    "2. Identify specific successful elements to incorporate.\n"
    "3. Understand what aspects in low-performance prompts hurt results.\n"
    "4. Generate ONE improved prompt avoiding identified pitfalls.\n"
    "5. The output prompt should also like the success prompt, avoid too long.\n\n"
    "Output Format: <IMPROVED_PROMPT> [Your Prompt] </IMPROVED_PROMPT>";

inline constexpr std::string_view kMetaExploitative =
    "You are analyzing prompts for medical image analysis tasks. All candidate prompts "
    "perform better than the baseline, so analyze what makes them successful and generate "
    "an even better version.\n\n"
    "BASE PROMPT (Baseline Reference):\n{BASE_PROMPT}\n\n"
    "BEST PERFORMING PROMPTS:\n{SUCCESS_TAIL}\n\n"
    "RELATIVELY WEAKER PROMPTS:\n{FAILURE_BULK}\n\n"
    "YOUR TASK:\n"
    "1. Analyze what makes the best prompts work so well.\n"
    "2. Identify the key success factors in both prompt sets.\n"
    "3. Understand what distinguishes the best from the weaker ones.\n"
    "4. Generate ONE improved prompt combining the best elements.\n\n"
    "Output strictly using <ANALYSIS> and <IMPROVED_PROMPT> tags.";

inline std::string fill(std::string_view tpl, std::string_view key, std::string_view value) {
    std::string out(tpl);
    const std::string needle = "{" + std::string(key) + "}";
    for (std::size_t pos = out.find(needle); pos != std::string::npos;
         pos = out.find(needle, pos)) {
        out.replace(pos, needle.size(), value);
        pos += value.size();
    }
    return out;
}

}  // namespace ddl::prompts
