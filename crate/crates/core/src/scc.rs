//! Strongly connected components of the off-diagonal support of a square matrix.

use nalgebra::DMatrix;

/// Tarjan's algorithm over the digraph with an edge `j -> k` whenever
/// `m[(j, k)] > 0` and `j != k`. Components are returned in reverse
/// topological order of the condensation; vertices inside a component are
/// sorted.
pub fn strongly_connected_components(m: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = m.nrows();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|j| (0..n).filter(|&k| k != j && m[(j, k)] > 0.0).collect())
        .collect();

    const UNVISITED: usize = usize::MAX;
    let mut index = vec![UNVISITED; n];
    let mut low = vec![0usize; n];
    let mut on_stack = vec![false; n];
    let mut stack: Vec<usize> = Vec::with_capacity(n);
    let mut components = Vec::new();
    let mut counter = 0usize;

    // explicit call stack of (vertex, next neighbor position)
    let mut call: Vec<(usize, usize)> = Vec::new();
    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root] = counter;
        low[root] = counter;
        counter += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(top) = call.len().checked_sub(1) {
            let (v, pos) = call[top];
            if pos < adj[v].len() {
                let w = adj[v][pos];
                call[top].1 += 1;
                if index[w] == UNVISITED {
                    index[w] = counter;
                    low[w] = counter;
                    counter += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call.push((w, 0));
                } else if on_stack[w] {
                    low[v] = low[v].min(index[w]);
                }
            } else {
                call.pop();
                if let Some(&(parent, _)) = call.last() {
                    low[parent] = low[parent].min(low[v]);
                }
                if low[v] == index[v] {
                    let mut comp = Vec::new();
                    loop {
                        let w = stack.pop().expect("tarjan stack underflow");
                        on_stack[w] = false;
                        comp.push(w);
                        if w == v {
                            break;
                        }
                    }
                    comp.sort_unstable();
                    components.push(comp);
                }
            }
        }
    }
    components
}

/// True when the off-diagonal support is strongly connected (a 1x1 matrix
/// counts as irreducible).
pub fn is_irreducible(m: &DMatrix<f64>) -> bool {
    strongly_connected_components(m).len() == 1
}
