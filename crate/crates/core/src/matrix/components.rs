use super::RatingMatrix;

/// Connected components of the bipartite support graph whose edges are the
/// strictly positive observed cells. Rows and columns with no positive cell
/// carry no label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupportComponents {
    row_label: Vec<Option<usize>>,
    col_label: Vec<Option<usize>>,
    n_components: usize,
}

impl SupportComponents {
    pub fn row_label(&self, i: usize) -> Option<usize> {
        self.row_label[i]
    }

    pub fn col_label(&self, j: usize) -> Option<usize> {
        self.col_label[j]
    }

    pub fn row_labels(&self) -> &[Option<usize>] {
        &self.row_label
    }

    pub fn col_labels(&self) -> &[Option<usize>] {
        &self.col_label
    }

    pub fn n_components(&self) -> usize {
        self.n_components
    }

    pub fn heap_bytes(&self) -> usize {
        (self.row_label.capacity() + self.col_label.capacity()) * std::mem::size_of::<Option<usize>>()
    }
}

struct DisjointSet {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSet {
    fn new(len: usize) -> Self {
        Self {
            parent: (0..len).collect(),
            rank: vec![0; len],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        while self.parent[x] != root {
            let next = self.parent[x];
            self.parent[x] = root;
            x = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (a, b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        match self.rank[a].cmp(&self.rank[b]) {
            std::cmp::Ordering::Less => self.parent[a] = b,
            std::cmp::Ordering::Greater => self.parent[b] = a,
            std::cmp::Ordering::Equal => {
                self.parent[b] = a;
                self.rank[a] += 1;
            }
        }
    }
}

/// Labels the support components. Component ids are assigned in ascending
/// order of each component's lowest row index.
pub fn support_components(m: &RatingMatrix) -> SupportComponents {
    let (n_rows, n_cols) = (m.n_rows(), m.n_cols());
    let mut sets = DisjointSet::new(n_rows + n_cols);
    let mut row_has = vec![false; n_rows];
    let mut col_has = vec![false; n_cols];
    for (i, j, _) in m.positive_cells() {
        sets.union(i, n_rows + j);
        row_has[i] = true;
        col_has[j] = true;
    }

    let mut label_of_root = vec![usize::MAX; n_rows + n_cols];
    let mut n_components = 0;
    let mut row_label = vec![None; n_rows];
    for i in (0..n_rows).filter(|&i| row_has[i]) {
        let root = sets.find(i);
        if label_of_root[root] == usize::MAX {
            label_of_root[root] = n_components;
            n_components += 1;
        }
        row_label[i] = Some(label_of_root[root]);
    }
    let col_label = (0..n_cols)
        .map(|j| col_has[j].then(|| label_of_root[sets.find(n_rows + j)]))
        .collect();

    SupportComponents {
        row_label,
        col_label,
        n_components,
    }
}
