import { describe, expect, it } from "vitest";
import { layoutDendrogram } from "../src/layout.js";
import { NewickError } from "../src/newick.js";

// a ten-leaf caterpillar with times, the shape the server sends
const TEN =
  "(((((((((0:0.9,1:0.9):0.08,2:0.98):0.002,3:0.982):0.003,4:0.985):0.002," +
  "5:0.987):0.003,6:0.99):0.002,7:0.992):0.003,8:0.995):0.002,9:0.997):0.003;";

describe("layoutDendrogram", () => {
  it("places one node per leaf for a ten-leaf query", () => {
    const layout = layoutDendrogram(TEN, {});
    expect(layout.leaves).toHaveLength(10);
    expect(new Set(layout.leaves.map((l) => l.leaf)).size).toBe(10);
  });

  it("runs time along the horizontal axis, root left of leaves", () => {
    const layout = layoutDendrogram("((0:0.6,1:0.6):0.3,2:0.9):0.1;", {}, {
      width: 640,
      height: 400,
      padX: 24,
      padY: 16,
    });
    const innerW = 640 - 48;
    for (const leaf of layout.leaves) {
      expect(leaf.x).toBeCloseTo(24 + 1.0 * innerW, 6); // leaves at t=1
    }
    // the root's vertical elbow sits at x(t=0.1), left of every leaf
    const minSegX = Math.min(...layout.segments.map((s) => Math.min(s.x1, s.x2)));
    expect(minSegX).toBeCloseTo(24 + 0.1 * innerW, 6);
    expect(minSegX).toBeLessThan(layout.leaves[0]!.x);
  });

  it("spaces leaves evenly down the vertical", () => {
    const layout = layoutDendrogram(TEN, {}, { height: 400, padY: 16 });
    const ys = layout.leaves.map((l) => l.y).sort((a, b) => a - b);
    const step = (400 - 32) / 9;
    ys.forEach((y, i) => expect(y).toBeCloseTo(16 + i * step, 6));
  });

  it("pins an internal elbow at the mean of its children's y", () => {
    const layout = layoutDendrogram("((0:0.6,1:0.6):0.3,2:0.9):0.1;", {});
    const leafY = new Map(layout.leaves.map((l) => [l.leaf, l.y]));
    const cherryY = (leafY.get(0)! + leafY.get(1)!) / 2;
    const rootY = (cherryY + leafY.get(2)!) / 2;
    // two edges per child: a vertical run at the parent plus a horizontal
    expect(layout.segments).toHaveLength(8);
    const verticals = layout.segments.filter((s) => s.x1 === s.x2);
    expect(verticals.some((s) => Math.abs(s.y1 - rootY) < 1e-9)).toBe(true);
    expect(verticals.some((s) => Math.abs(s.y1 - cherryY) < 1e-9)).toBe(true);
    const horizontals = layout.segments.filter((s) => s.y1 === s.y2);
    expect(horizontals).toHaveLength(4);
    for (const h of horizontals) expect(h.x2).toBeGreaterThan(h.x1);
  });

  it("maps names through the annotation table and falls back to the id", () => {
    const layout = layoutDendrogram("((3:0.5,7:0.5):0.5,9:1.0):0.0;", {
      "3": "setosa 3",
      "7": "virginica 7",
    });
    const byLeaf = new Map(layout.leaves.map((l) => [l.leaf, l.name]));
    expect(byLeaf.get(3)).toBe("setosa 3");
    expect(byLeaf.get(7)).toBe("virginica 7");
    expect(byLeaf.get(9)).toBe("9");
  });

  it("propagates parse failures instead of guessing", () => {
    expect(() => layoutDendrogram("((1,2;", {})).toThrow(NewickError);
  });
});
