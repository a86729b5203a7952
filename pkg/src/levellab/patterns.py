"""Built-in base patterns for the wave function collapse generator.

Each pattern is a small character template. Distinct characters are
distinct collapse symbols; the adjacency rules are exactly the symbol
pairs present in the template (per direction). ``wall_chars`` lists the
symbols that render as WALL in the final layout; everything else renders
as EMPTY.

Multi-character alphabets let a 1x1 tiled model express structure that
plain {wall, empty} rules cannot: e.g. the maze patterns use dedicated
symbols for lattice posts, wall runs and gaps so that collapsed layouts
keep a corridor grid, and the block patterns use quadrant symbols so
obstacles always come in 2x2 chunks.
"""

from __future__ import annotations

TRAIN_PATTERN_NAMES = ("caverns", "pillars", "maze", "shelves")

EDGE_PATTERN_NAMES = (
    "columns",
    "blocks2",
    "maze_open",
    "maze_closed",
    "pillars_dense",
    "pillars_sparse",
    "caverns_dense",
    "caverns_sparse",
    "crosses",
    "shelves_dense",
    "columns_dense",
    "diag",
    "dominoes_h",
    "dominoes_v",
    "stripes_h",
    "stripes_v",
    "islands",
    "open",
)

# name -> (template text, wall characters)
PATTERN_SPECS: dict[str, tuple[str, str]] = {
    # unconstrained adjacency; structure comes from symbol frequencies and
    # the largest-component cleanup
    "caverns": (
        """
        ....#
        .##..
        ..#..
        .....
        #...#
        """,
        "#",
    ),
    # walls never touch: scattered single-cell obstacles
    "pillars": (
        """
        .....
        ..#..
        .....
        .#..#
        .....
        """,
        "#",
    ),
    # lattice maze: P posts, H/V wall runs, h/v open gaps
    "maze": (
        """
        PHPhP
        V.v.V
        PhPHP
        v.V.v
        PHPhP
        """,
        "PHV",
    ),
    # horizontal wall segments only (no vertical stacking)
    "shelves": (
        """
        .......
        .#####.
        .......
        .......
        ...####
        """,
        "#",
    ),
    "columns": (
        """
        .....
        .#..#
        .#..#
        .#...
        .....
        """,
        "#",
    ),
    # obstacles are exact 2x2 blocks (quadrant symbols), never adjacent
    "blocks2": (
        """
        ......
        .ab...
        .cd.ab
        ....cd
        ......
        """,
        "abcd",
    ),
    "maze_open": (
        """
        PhPhP
        v.v.v
        PhPHP
        v.V.v
        PhPhP
        """,
        "PHV",
    ),
    "maze_closed": (
        """
        PHPhP
        V.V.v
        PHPHP
        V.v.V
        PhPHP
        """,
        "PHV",
    ),
    "pillars_dense": (
        """
        .#.#.
        .....
        #.#.#
        .....
        .#.#.
        """,
        "#",
    ),
    "pillars_sparse": (
        """
        .......
        .......
        ...#...
        .......
        .......
        """,
        "#",
    ),
    "caverns_dense": (
        """
        ##..#
        .###.
        ..##.
        ##...
        #..##
        """,
        "#",
    ),
    "caverns_sparse": (
        """
        .....
        .#...
        ....#
        ....#
        ..#..
        """,
        "#",
    ),
    # plus-shaped obstacles from five dedicated symbols
    "crosses": (
        """
        .......
        ...n...
        ..wme..
        ...s...
        .......
        """,
        "nsewm",
    ),
    "shelves_dense": (
        """
        ......
        .####.
        ......
        ####..
        ......
        ..####
        """,
        "#",
    ),
    "columns_dense": (
        """
        .#.#..
        .#.#.#
        .#...#
        ...#.#
        .#.#..
        """,
        "#",
    ),
    "diag": (
        """
        #...
        .#..
        ..#.
        ...#
        """,
        "#",
    ),
    # horizontal dominoes: l always followed by r
    "dominoes_h": (
        """
        ......
        .lr...
        ....lr
        .lr...
        ......
        """,
        "lr",
    ),
    "dominoes_v": (
        """
        ......
        .t..t.
        .b..b.
        ..t...
        ..b...
        """,
        "tb",
    ),
    "stripes_h": (
        """
        .....
        #####
        .....
        #####
        """,
        "#",
    ),
    "stripes_v": (
        """
        .#.#
        .#.#
        .#.#
        """,
        "#",
    ),
    "islands": (
        """
        ........
        .ab.....
        .cd.....
        ........
        ........
        """,
        "abcd",
    ),
    "open": (
        """
        ...
        ...
        """,
        "#",
    ),
    # exactly two consistent tilings (the two phases); used by tests
    "checker": (
        """
        #.#.
        .#.#
        #.#.
        """,
        "#",
    ),
}
