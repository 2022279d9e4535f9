#![no_main]

use libfuzzer_sys::fuzz_target;
use raresim_core::expr::Expr;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(expr) = Expr::parse(src) else {
        return;
    };
    // Printing is fully parenthesized, so it must parse back to the same tree.
    let printed = expr.to_string();
    let reparsed = Expr::parse(&printed).expect("printed expression parses");
    assert_eq!(reparsed.to_string(), printed);
    assert_eq!(reparsed.arity(), expr.arity());
    let x = vec![0.5; expr.arity()];
    let (a, b) = (expr.eval(&x), reparsed.eval(&x));
    assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
});
