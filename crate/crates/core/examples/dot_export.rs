//! Graphviz rendering of the first levels of a diagram.

use vershik_lab::bratteli::two_extremes;

fn main() {
    print!("{}", two_extremes(4).to_dot(3));
}
