use super::{parse_system, RecurrenceSystem};

const MATMUL: &str = "\
system matmul
index i = 0..4
index j = 0..4
index k = 0..4
A[i,j,k] = A[i,j-1,k]
B[i,j,k] = B[i-1,j,k]
C[i,j,k] = C[i,j,k-1] + A[i,j,k]*B[i,j,k]
";

// Weights stay put along k while inputs move diagonally.
const CONV1D: &str = "\
system conv1d
index i = 0..6
index k = 0..3
W[i,k] = W[i-1,k]
X[i,k] = X[i-1,k+1]
Y[i,k] = Y[i,k-1] + W[i,k]*X[i,k]
";

// k walks the K*K window; the input index moves with k.
const CONV2D_DIRECT: &str = "\
system conv2d_direct
const K = 3
index i = 0..4
index j = 0..4
index k = 0..9
C[i,j,k] = C[i,j,k-1] + A[i+k/K,j+k%K,k]*B[k/K,k%K,k]
";

// After im2col the window is unrolled into rows of A, so the system is a
// plain matrix product over (pixel, filter, tap).
const CONV2D_IM2COL: &str = "\
system conv2d_im2col
index p = 0..16
index f = 0..2
index t = 0..9
A[p,f,t] = A[p,f-1,t]
B[p,f,t] = B[p-1,f,t]
C[p,f,t] = C[p,f,t-1] + A[p,f,t]*B[p,f,t]
";

const BUILTINS: [(&str, &str); 4] = [
    ("matmul", MATMUL),
    ("conv1d", CONV1D),
    ("conv2d_direct", CONV2D_DIRECT),
    ("conv2d_im2col", CONV2D_IM2COL),
];

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTINS.iter().map(|(n, _)| *n)
}

pub fn builtin_source(name: &str) -> Option<&'static str> {
    BUILTINS.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn builtin(name: &str) -> Option<RecurrenceSystem> {
    builtin_source(name).map(|s| parse_system(s).expect("builtin systems parse"))
}
