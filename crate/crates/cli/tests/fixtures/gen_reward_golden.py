"""Writes reward_golden.jsonl: scoring cases with independently computed
expected components. Run from this directory: python3 gen_reward_golden.py"""

import json
import re

R_T, R_F, PRETEXT = 0.5, 1.0, 1.0
CARD = {"image_rotate": 4, "image_flip": 3, "image_puzzle": 6,
        "video_rotate_3d": 4, "video_reverse": 2, "video_shuffle": 6}


def norm(text):
    text = "".join(c for c in text.lower() if c.isalnum() or c.isspace())
    return text.split()


def lcs(a, b):
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) - 1, -1, -1):
        for j in range(len(b) - 1, -1, -1):
            t[i][j] = t[i + 1][j + 1] + 1 if a[i] == b[j] else max(t[i + 1][j], t[i][j + 1])
    return t[0][0]


def rouge(cand, ref):
    c, r = norm(cand), norm(ref)
    if not c:
        return 0.0
    m = lcs(c, r)
    if m == 0:
        return 0.0
    p, q = m / len(c), m / len(r)
    return 2 * p * q / (p + q)


def edits(a, b):
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a) + 1):
        for j in range(len(b) + 1):
            if i == 0 or j == 0:
                t[i][j] = i + j
            else:
                t[i][j] = min(t[i - 1][j] + 1, t[i][j - 1] + 1, t[i - 1][j - 1] + (a[i - 1] != b[j - 1]))
    return t[-1][-1]


def ocr(hyp, ref):
    r = norm(ref)
    return max(0.0, 1 - edits(norm(hyp), r) / len(r))


def viss(think, t, a):
    return f"<think>{think}</think><transform>{t}</transform><answer>{a}</answer>"


def plain(think, a):
    return f"<think>{think}</think><answer>{a}</answer>"


cases = []


def add(name, mode, raw, r_t, r_a, r_f, task=None, transform=None):
    case = {"name": name, "mode": mode, "raw_output": raw}
    if task is not None:
        case["task"] = task
    if transform is not None:
        case["transform"] = {"family": transform[0], "param": transform[1]}
    case["expected"] = {"r_t": r_t, "r_a": r_a, "r_f": r_f, "total": r_t + r_a + r_f}
    cases.append(case)


mcq = {"kind": "mcq", "ground_truth": "C", "options": ["red", "green", "blue", "black"]}
num7 = {"kind": "numeric", "ground_truth": 7}
free = {"kind": "free_form", "ground_truth": "a man rides a red bike"}
text = {"kind": "ocr", "ground_truth": "open daily until nine"}
reg = {"kind": "regression", "ground_truth": 10}

# viss: every combination of transform and answer outcome
add("viss_all_correct", "viss", viss("rotated", "B", "C"), R_T, 1.0, R_F, mcq, ("image_rotate", 1))
add("viss_transform_wrong", "viss", viss("rotated", "A", "C"), 0.0, 1.0, R_F, mcq, ("image_rotate", 1))
add("viss_answer_wrong", "viss", viss("rotated", "B", "D"), R_T, 0.0, R_F, mcq, ("image_rotate", 1))
add("viss_both_wrong", "viss", viss("rotated", "D", "A"), 0.0, 0.0, R_F, mcq, ("image_rotate", 1))
add("viss_numeric_exact", "viss", viss("reversed", "B", "The count is 7"), R_T, 1.0, R_F, num7, ("video_reverse", 1))
add("viss_numeric_within_tolerance", "viss", viss("reversed", "B", "7.0000004"), R_T, 1.0, R_F, num7, ("video_reverse", 1))
add("viss_numeric_off", "viss", viss("reversed", "A", "7.01"), 0.0, 0.0, R_F, num7, ("video_reverse", 1))
add("viss_numeric_words", "viss", viss("forward", "A", "seven"), R_T, 0.0, R_F, num7, ("video_reverse", 0))
add("viss_free_form_partial", "viss", viss("shuffled", "E", "A man rides a bike."),
    R_T, rouge("A man rides a bike.", free["ground_truth"]), R_F, free, ("video_shuffle", 4))
add("viss_free_form_disjoint", "viss", viss("shuffled", "F", "nothing here"),
    0.0, rouge("nothing here", free["ground_truth"]), R_F, free, ("video_shuffle", 4))
add("viss_ocr_one_error", "viss", viss("flipped", "C", "open daily until ten"),
    R_T, ocr("open daily until ten", text["ground_truth"]), R_F, text, ("image_flip", 2))
add("viss_ocr_garbage", "viss", viss("flipped", "C", "x y z w v u t s"),
    R_T, ocr("x y z w v u t s", text["ground_truth"]), R_F, text, ("image_flip", 2))
add("viss_regression_close", "viss", viss("puzzle", "A", "about 12"), R_T, 0.8, R_F, reg, ("image_puzzle", 0))
add("viss_regression_far", "viss", viss("puzzle", "A", "25"), R_T, 0.0, R_F, reg, ("image_puzzle", 0))
add("viss_missing_transform_tag", "viss", plain("t", "C"), 0.0, 0.0, 0.0, mcq, ("image_rotate", 1))
add("viss_wrong_order", "viss", "<transform>B</transform><think>t</think><answer>C</answer>", 0.0, 0.0, 0.0, mcq, ("image_rotate", 1))
add("viss_stray_text", "viss", "Sure! " + viss("t", "B", "C"), 0.0, 0.0, 0.0, mcq, ("image_rotate", 1))
add("viss_duplicate_answer", "viss", viss("t", "B", "C") + "<answer>C</answer>", 0.0, 0.0, 0.0, mcq, ("image_rotate", 1))
add("viss_empty_think", "viss", viss("  ", "B", "C"), 0.0, 0.0, 0.0, mcq, ("image_rotate", 1))
add("viss_unclosed_answer", "viss", "<think>t</think><transform>B</transform><answer>C", 0.0, 0.0, 0.0, mcq, ("image_rotate", 1))

# pretext: the transform letter sits in the answer block
for i, (family, param) in enumerate([("image_rotate", 3), ("image_flip", 1), ("image_puzzle", 5),
                                     ("video_rotate_3d", 2), ("video_reverse", 0), ("video_shuffle", 3)]):
    letter = "ABCDEF"[param]
    add(f"pretext_correct_{family}", "pretext", plain("look", letter), PRETEXT, 0.0, R_F, None, (family, param))
add("pretext_wrong", "pretext", plain("look", "A"), 0.0, 0.0, R_F, None, ("image_flip", 2))
add("pretext_parenthesized_lowercase", "pretext", plain("look", "The answer is (b)."), PRETEXT, 0.0, R_F, None, ("video_reverse", 1))
add("pretext_first_letter_wins", "pretext", plain("look", "Between A and B, unsure"), 0.0, 0.0, R_F, None, ("video_reverse", 1))
add("pretext_letter_beyond_options", "pretext", plain("look", "F"), 0.0, 0.0, R_F, None, ("video_reverse", 1))
add("pretext_no_letter", "pretext", plain("look", "none of these"), 0.0, 0.0, R_F, None, ("image_rotate", 0))
add("pretext_format_broken", "pretext", "<think>look</think>B", 0.0, 0.0, 0.0, None, ("video_reverse", 1))
add("pretext_transform_tag_not_allowed", "pretext", viss("look", "B", "B"), 0.0, 0.0, 0.0, None, ("video_reverse", 1))
add("pretext_task_ignored", "pretext", plain("look", "C"), PRETEXT, 0.0, R_F, mcq, ("video_shuffle", 2))

# vanilla: accuracy only, never a transform reward
add("vanilla_mcq_correct", "vanilla", plain("think", "C"), 0.0, 1.0, R_F, mcq)
add("vanilla_mcq_wrong", "vanilla", plain("think", "B"), 0.0, 0.0, R_F, mcq)
add("vanilla_mcq_text_truth", "vanilla", plain("think", "(c) blue"), 0.0, 1.0, R_F,
    {"kind": "mcq", "ground_truth": "blue", "options": ["red", "green", "blue"]})
add("vanilla_mcq_no_letter", "vanilla", plain("think", "blue"), 0.0, 0.0, R_F, mcq)
add("vanilla_numeric_negative", "vanilla", plain("think", "-3.5 degrees"), 0.0, 1.0, R_F,
    {"kind": "numeric", "ground_truth": -3.5})
add("vanilla_numeric_exponent", "vanilla", plain("think", "1e3"), 0.0, 1.0, R_F,
    {"kind": "numeric", "ground_truth": 1000})
add("vanilla_numeric_first_literal", "vanilla", plain("think", "2 or 7"), 0.0, 0.0, R_F, num7)
add("vanilla_numeric_missing", "vanilla", plain("think", "no idea"), 0.0, 0.0, R_F, num7)
add("vanilla_free_form_exact", "vanilla", plain("think", "A man rides a red bike"), 0.0, 1.0, R_F, free)
add("vanilla_free_form_reordered", "vanilla", plain("think", "red bike a man rides"),
    0.0, rouge("red bike a man rides", free["ground_truth"]), R_F, free)
add("vanilla_ocr_exact_case_insensitive", "vanilla", plain("think", "OPEN DAILY UNTIL NINE"), 0.0, 1.0, R_F, text)
add("vanilla_ocr_insertions", "vanilla", plain("think", "we are open daily until nine pm"),
    0.0, ocr("we are open daily until nine pm", text["ground_truth"]), R_F, text)
add("vanilla_regression_under", "vanilla", plain("think", "9.5"), 0.0, 1.0 - 0.5 / 10.0, R_F, reg)
add("vanilla_transform_tag_not_allowed", "vanilla", viss("t", "B", "C"), 0.0, 0.0, 0.0, mcq)
add("vanilla_missing_think", "vanilla", "<answer>C</answer>", 0.0, 0.0, 0.0, mcq)
add("vanilla_whitespace_between_blocks", "vanilla", "\n<think>think</think>\n\n<answer>C</answer>\n", 0.0, 1.0, R_F, mcq)

assert len(cases) == 50, len(cases)
assert len({c["name"] for c in cases}) == 50
with open("reward_golden.jsonl", "w") as f:
    for c in cases:
        f.write(json.dumps(c, sort_keys=False) + "\n")
print(f"wrote {len(cases)} cases")
