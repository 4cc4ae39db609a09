import { describe, expect, it } from "vitest";

import { MASK_SIZE, MaskBitmap } from "../src/maskBitmap.js";

describe("MaskBitmap", () => {
    it("starts empty", () => {
        const mask = new MaskBitmap();
        expect(mask.count()).toBe(0);
        expect(mask.data.length).toBe(MASK_SIZE * MASK_SIZE);
    });

    it("rejects wrong sizes and non-binary values", () => {
        expect(() => new MaskBitmap(new Uint8Array(100))).toThrow(/512/);
        const bad = new Uint8Array(MASK_SIZE * MASK_SIZE);
        bad[7] = 128;
        expect(() => new MaskBitmap(bad)).toThrow(/0 or 255/);
    });

    it("paints a disc whose area is within a perimeter band of pi r^2", () => {
        for (const radius of [2, 8, 16, 30]) {
            const mask = new MaskBitmap();
            mask.paintDisc(256, 256, radius);
            const expected = Math.PI * radius * radius;
            const tolerance = 2 * Math.PI * radius + 4;
            expect(Math.abs(mask.count() - expected)).toBeLessThanOrEqual(tolerance);
        }
    });

    it("zero-length stroke stamps a single disc", () => {
        const byStroke = new MaskBitmap();
        byStroke.paintStroke([{ x: 100, y: 100 }], 10);
        const byDisc = new MaskBitmap();
        byDisc.paintDisc(100, 100, 10);
        expect(byStroke.equals(byDisc)).toBe(true);
    });

    it("paint then erase along the same stroke leaves the mask empty", () => {
        const mask = new MaskBitmap();
        const stroke = [
            { x: 50, y: 50 },
            { x: 120, y: 90 },
            { x: 180, y: 60 },
        ];
        mask.paintStroke(stroke, 12, "paint");
        expect(mask.count()).toBeGreaterThan(0);
        mask.paintStroke(stroke, 12, "erase");
        expect(mask.count()).toBe(0);
    });

    it("strokes are gap-free at 1px sampling", () => {
        const mask = new MaskBitmap();
        mask.paintStroke(
            [
                { x: 20, y: 20 },
                { x: 470, y: 300 },
            ],
            4,
        );
        // every point along the segment must be covered
        const steps = 1000;
        for (let s = 0; s <= steps; s++) {
            const x = Math.round(20 + (450 * s) / steps);
            const y = Math.round(20 + (280 * s) / steps);
            expect(mask.at(x, y)).toBe(true);
        }
    });

    it("clips painting at the borders", () => {
        const mask = new MaskBitmap();
        mask.paintDisc(0, 0, 20);
        mask.paintDisc(511, 511, 20);
        expect(mask.at(0, 0)).toBe(true);
        expect(mask.at(511, 511)).toBe(true);
        // roughly a quarter disc at each corner
        const quarter = (Math.PI * 20 * 20) / 4;
        expect(Math.abs(mask.count() - 2 * quarter)).toBeLessThanOrEqual(2 * (2 * Math.PI * 20 + 4));
    });

    it("snapshot/restore round trips exactly", () => {
        const mask = new MaskBitmap();
        mask.paintDisc(256, 256, 25);
        const before = mask.snapshot();
        mask.paintDisc(100, 100, 40);
        expect(mask.equals(MaskBitmap.fromBytes(before))).toBe(false);
        mask.restore(before);
        expect(mask.equals(MaskBitmap.fromBytes(before))).toBe(true);
    });
});
