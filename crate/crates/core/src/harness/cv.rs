use crate::error::{Error, Result};
use crate::rng::RandomStream;

/// One cross-validation fold; both index lists are sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Random `folds`-way partition of `0..n`. The first `n mod folds` test sets
/// get one extra row.
pub fn kfold_split(n: usize, folds: usize, stream: &mut RandomStream) -> Result<Vec<Fold>> {
    if folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {folds}")));
    }
    if folds > n {
        return Err(Error::Config(format!("{folds} folds for {n} rows")));
    }
    let perm = stream.permutation(n);
    let (base, extra) = (n / folds, n % folds);
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        let mut test = perm[start..start + len].to_vec();
        test.sort_unstable();
        let mut in_test = vec![false; n];
        for &i in &test {
            in_test[i] = true;
        }
        let train = (0..n).filter(|&i| !in_test[i]).collect();
        out.push(Fold { train, test });
        start += len;
    }
    Ok(out)
}
