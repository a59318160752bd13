use odp_core::temporal::slice_indices;

use crate::Outcome;

/// Slots `s ∈ [1, T]` selected by each slice, found by scanning.
fn scan(t: usize, l: usize, p: usize) -> [Vec<usize>; 4] {
    let lag = |s: usize, shift: usize, step: usize| -> bool {
        // s = T + shift - step·k for some k in 1..=P
        let top = t + shift;
        s < top && (top - s) % step == 0 && (1..=p).contains(&((top - s) / step))
    };
    let pick = |f: &dyn Fn(usize) -> bool| (1..=t).filter(|&s| f(s)).collect::<Vec<_>>();
    [
        pick(&|s| lag(s, 1, 1)),
        pick(&|s| lag(s, 1, l)),
        pick(&|s| lag(s, 0, l)),
        pick(&|s| lag(s, 2, l)),
    ]
}

pub fn criterion() -> Outcome {
    let mut compared = 0;
    let mut problems = Vec::new();
    for l in [2usize, 24] {
        for t in 1..=200usize {
            for p in 1..=(t / l + 1) {
                let want = scan(t, l, p);
                let valid = want.iter().all(|s| s.len() == p);
                match slice_indices(t, l, p) {
                    Ok(idx) if valid => {
                        let got = [idx.tendency, idx.periodicity, idx.periodic_minus, idx.periodic_plus];
                        if got != want {
                            problems.push(format!("T={t} l={l} P={p}: {got:?} vs {want:?}"));
                        }
                    }
                    Ok(_) => problems.push(format!("T={t} l={l} P={p} accepted but reaches slot 0")),
                    Err(_) if valid => problems.push(format!("T={t} l={l} P={p} rejected")),
                    Err(_) => {}
                }
                compared += 1;
            }
        }
    }
    if slice_indices(168, 24, 7).is_ok() {
        problems.push("T=168 l=24 P=7 accepted".into());
    }
    match slice_indices(169, 24, 7) {
        Ok(idx) => {
            let expected = [
                (163..=169).collect::<Vec<_>>(),
                vec![2, 26, 50, 74, 98, 122, 146],
                vec![1, 25, 49, 73, 97, 121, 145],
                vec![3, 27, 51, 75, 99, 123, 147],
            ];
            if [idx.tendency, idx.periodicity, idx.periodic_minus, idx.periodic_plus] != expected {
                problems.push("T=169 l=24 P=7 sets differ from the worked example".into());
            }
        }
        Err(e) => problems.push(format!("T=169 l=24 P=7 rejected: {e}")),
    }
    Outcome::check(
        problems.is_empty(),
        if problems.is_empty() {
            format!("{compared} (T, l, P) triples match; T=168 rejected; T=169 sets exact")
        } else {
            problems[..problems.len().min(3)].join("; ")
        },
    )
}
