//! Frozen golden pack for cyclomatic complexity. Expected values were
//! derived once by hand from the documented rule set (base 1 per function,
//! +1 per `if`/`elif`/`for`/`while`/`and`/`or`/`except`/`with` keyword
//! token) and are never recomputed from the implementation under test.

use equivcheck::scoring::{cyclomatic_complexity, CcRules};

fn check(src: &str, expected: &[(&str, u64)]) {
    let report = cyclomatic_complexity(src, CcRules::RadonPython).unwrap();
    let got: Vec<(&str, u64)> = report
        .per_function
        .iter()
        .map(|f| (f.name.as_str(), f.complexity))
        .collect();
    assert_eq!(got, expected, "source:\n{src}");
    let mean = expected.iter().map(|(_, c)| *c as f64).sum::<f64>() / expected.len() as f64;
    assert!((report.mean - mean).abs() < 1e-9);
}

#[test]
fn golden_01_straight_line() {
    check("def answer():\n    return 42\n", &[("answer", 1)]);
}

#[test]
fn golden_02_single_if() {
    check(
        "def is_pos(x):\n    if x > 0:\n        return True\n    return False\n",
        &[("is_pos", 2)],
    );
}

#[test]
fn golden_03_if_elif_else() {
    check(
        "def sign(x):\n    if x > 0:\n        return 1\n    elif x < 0:\n        return -1\n    else:\n        return 0\n",
        &[("sign", 3)],
    );
}

#[test]
fn golden_04_loop_with_guard() {
    check(
        "def first_even(xs):\n    for x in xs:\n        if x % 2 == 0:\n            return x\n    return None\n",
        &[("first_even", 3)],
    );
}

#[test]
fn golden_05_while_with_and() {
    check(
        "def countdown(n, limit):\n    steps = 0\n    while n > 0 and steps < limit:\n        n -= 1\n        steps += 1\n    return steps\n",
        &[("countdown", 3)],
    );
}

#[test]
fn golden_06_two_except_handlers() {
    check(
        "def parse(text):\n    try:\n        return int(text)\n    except ValueError:\n        return None\n    except TypeError:\n        return None\n",
        &[("parse", 3)],
    );
}

#[test]
fn golden_07_with_statement() {
    check(
        "def head(path):\n    with open(path) as fh:\n        return fh.readline()\n",
        &[("head", 2)],
    );
}

#[test]
fn golden_08_ternary() {
    check(
        "def absolute(x):\n    return x if x >= 0 else -x\n",
        &[("absolute", 2)],
    );
}

#[test]
fn golden_09_comprehension_with_filter() {
    check(
        "def evens(xs):\n    return [x for x in xs if x % 2 == 0]\n",
        &[("evens", 3)],
    );
}

#[test]
fn golden_10_boolean_chain() {
    check(
        "def admit(age, member, vip):\n    if age >= 18 and member or vip:\n        return True\n    return False\n",
        &[("admit", 4)],
    );
}

#[test]
fn golden_11_nested_loops() {
    check(
        "def has_pair(xs, target):\n    for a in xs:\n        for b in xs:\n            if a + b == target:\n                return True\n    return False\n",
        &[("has_pair", 4)],
    );
}

#[test]
fn golden_12_mixed_constructs() {
    // 1 + with + while + if + or = 5
    check(
        "def pump(path, limit):\n    count = 0\n    with open(path) as fh:\n        while count < limit:\n            line = fh.readline()\n            if not line or line.startswith('#'):\n                break\n            count += 1\n    return count\n",
        &[("pump", 5)],
    );
}

#[test]
fn golden_13_module_with_three_functions() {
    let src = "def one():\n    return 1\n\ndef gate(a, b):\n    if a or b:\n        return 1\n    return 0\n\ndef scan(xs):\n    total = 0\n    for x in xs:\n        if x:\n            total += 1\n    return total\n";
    check(src, &[("one", 1), ("gate", 3), ("scan", 3)]);
}

#[test]
fn golden_14_keywords_in_strings_ignored() {
    check(
        "def banner():\n    msg = 'if you and I or anyone'\n    doc = \"\"\"while this\n    for that\"\"\"\n    return msg + doc\n",
        &[("banner", 1)],
    );
}
