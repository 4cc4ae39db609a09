import { RevisionConflictError, pairsFromWire } from "./api.js";
import { MASK_SIZE, MaskBitmap, type PaintMode, type StrokePoint } from "./maskBitmap.js";
import type { Point, PointPair, SetRecord, TransformDict, TransformResponse } from "./types.js";

/** The slice of ApiClient a session needs; narrow so tests can stub it. */
export interface SessionApi {
    computeTransform(setId: string, pairs: PointPair[]): Promise<TransformResponse>;
    saveAnnotation(
        setId: string,
        maskBytes: Uint8Array,
        transform: TransformDict,
        pairs: PointPair[],
        expectedRevision: number,
    ): Promise<SetRecord>;
    fetchAlignment(setId: string): Promise<{ transform: TransformDict; pairs: { source: [number, number]; target: [number, number] }[] }>;
    fetchRecord(setId: string): Promise<SetRecord>;
}

export type SaveOutcome =
    | { kind: "saved"; revision: number }
    | { kind: "conflict"; currentRevision: number }
    | { kind: "queued"; error: string };

function assertInBounds(p: Point, pane: string): void {
    if (p.x < 0 || p.y < 0 || p.x >= MASK_SIZE || p.y >= MASK_SIZE) {
        throw new Error(`${pane} click (${p.x}, ${p.y}) is outside the image`);
    }
}

/**
 * One annotation session over one training set.
 *
 * Holds the placed point pairs, the server-computed transform and
 * residuals, the mask bitmap with its undo/redo stacks, and the dirty /
 * pending-save flags the UI surfaces. All geometry comes from the server
 * so the browser and the CLI can never disagree.
 */
export class AnnotationSession {
    readonly setId: string;
    revision: number;
    pairs: PointPair[] = [];
    transform: TransformDict | null = null;
    residuals: number[] = [];
    warpedPreviewB64: string | null = null;
    mask: MaskBitmap;
    brushDiameter = 16;
    dirty = false;
    pendingSave = false;
    matchConfirmed = false;

    private undoStack: Uint8Array[] = [];
    private redoStack: Uint8Array[] = [];
    private queuedSave: { expectedRevision: number } | null = null;

    constructor(
        private readonly api: SessionApi,
        setId: string,
        revision: number,
        mask?: MaskBitmap,
    ) {
        this.setId = setId;
        this.revision = revision;
        this.mask = mask ?? new MaskBitmap();
    }

    /** Restore a full session from the server's stored state. */
    static async load(api: SessionApi, setId: string, maskBytes: Uint8Array): Promise<AnnotationSession> {
        const record = await api.fetchRecord(setId);
        const session = new AnnotationSession(api, setId, record.revision, MaskBitmap.fromBytes(maskBytes));
        const alignment = await api.fetchAlignment(setId);
        session.pairs = pairsFromWire(alignment.pairs);
        session.transform = alignment.transform;
        if (session.pairs.length >= 2) {
            await session.refreshTransform();
        }
        return session;
    }

    /** One click in the RGB pane plus one in the contrast pane. */
    async placePointPair(rgbClick: Point, contrastClick: Point): Promise<void> {
        assertInBounds(rgbClick, "RGB pane");
        assertInBounds(contrastClick, "contrast pane");
        this.pairs.push({ source: contrastClick, target: rgbClick });
        this.dirty = true;
        if (this.pairs.length >= 2) {
            await this.refreshTransform();
        }
    }

    async removePointPair(index: number): Promise<void> {
        if (index < 0 || index >= this.pairs.length) {
            throw new Error(`no point pair at index ${index}`);
        }
        this.pairs.splice(index, 1);
        this.dirty = true;
        if (this.pairs.length >= 2) {
            await this.refreshTransform();
        } else {
            this.transform = null;
            this.residuals = [];
            this.warpedPreviewB64 = null;
            this.matchConfirmed = false;
        }
    }

    private async refreshTransform(): Promise<void> {
        const response = await this.api.computeTransform(this.setId, this.pairs);
        this.transform = response.transform;
        this.residuals = response.residuals;
        this.warpedPreviewB64 = response.warped_contrast_png_base64;
    }

    /** The user judged the matched pane acceptable; painting unlocks. */
    confirmMatch(): void {
        if (this.transform === null) {
            throw new Error("no transform to confirm; place at least two point pairs");
        }
        this.matchConfirmed = true;
    }

    paint(stroke: StrokePoint[], mode: PaintMode = "paint"): void {
        if (!this.matchConfirmed) {
            throw new Error("confirm the match before painting the mask");
        }
        this.undoStack.push(this.mask.snapshot());
        this.redoStack = [];
        this.mask.paintStroke(stroke, this.brushDiameter / 2, mode);
        this.dirty = true;
    }

    get canUndo(): boolean {
        return this.undoStack.length > 0;
    }

    get canRedo(): boolean {
        return this.redoStack.length > 0;
    }

    undo(): void {
        const snapshot = this.undoStack.pop();
        if (snapshot === undefined) return;
        this.redoStack.push(this.mask.snapshot());
        this.mask.restore(snapshot);
        this.dirty = true;
    }

    redo(): void {
        const snapshot = this.redoStack.pop();
        if (snapshot === undefined) return;
        this.undoStack.push(this.mask.snapshot());
        this.mask.restore(snapshot);
        this.dirty = true;
    }

    /**
     * Push mask + alignment to the server in one revision bump.
     *
     * Conflicts come back as an outcome (the UI offers reload vs
     * overwrite); network failures queue the save and set pendingSave.
     */
    async save(expectedRevisionOverride?: number): Promise<SaveOutcome> {
        if (this.transform === null) {
            throw new Error("nothing to save: no transform has been estimated");
        }
        const expected = expectedRevisionOverride ?? this.revision;
        try {
            const record = await this.api.saveAnnotation(
                this.setId,
                this.mask.data,
                this.transform,
                this.pairs,
                expected,
            );
            this.revision = record.revision;
            this.dirty = false;
            this.pendingSave = false;
            this.queuedSave = null;
            return { kind: "saved", revision: record.revision };
        } catch (error) {
            if (error instanceof RevisionConflictError) {
                return { kind: "conflict", currentRevision: error.currentRevision };
            }
            if (error instanceof TypeError) {
                // fetch network failure: keep the work, mark it pending
                this.pendingSave = true;
                this.queuedSave = { expectedRevision: expected };
                return { kind: "queued", error: error.message };
            }
            throw error;
        }
    }

    /** Retry a save that was queued by a network failure. */
    async retryQueuedSave(): Promise<SaveOutcome> {
        if (this.queuedSave === null) {
            throw new Error("no queued save to retry");
        }
        return this.save(this.queuedSave.expectedRevision);
    }
}
