package com.vuldroid.application;

import android.content.Intent;
import android.net.Uri;
import android.os.Bundle;

import androidx.appcompat.app.AppCompatActivity;

/**
 * Exported activity that hands back a document chosen by the caller.
 */
public class DocumentViewer extends AppCompatActivity {

    @Override
    protected void onCreate(Bundle savedInstanceState) {
        super.onCreate(savedInstanceState);

        Intent incoming = getIntent();
        // caller-controlled intent is returned as the result, keeping its grant flags
        Intent forward = incoming.getParcelableExtra("extra_intent");
        if (forward != null) {
            setResult(RESULT_OK, forward);
            finish();
            return;
        }

        Uri document = incoming.getData();
        if (document != null) {
            Intent result = new Intent();
            result.setData(document);
            result.addFlags(Intent.FLAG_GRANT_READ_URI_PERMISSION
                    | Intent.FLAG_GRANT_WRITE_URI_PERMISSION);
            setResult(RESULT_OK, result);
        }
        finish();
    }
}
