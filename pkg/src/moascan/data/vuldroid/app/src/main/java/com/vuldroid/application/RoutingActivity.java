package com.vuldroid.application;

import android.content.Intent;
import android.os.Bundle;

import androidx.appcompat.app.AppCompatActivity;

/**
 * Exported trampoline that launches whatever component the caller names.
 */
public class RoutingActivity extends AppCompatActivity {

    @Override
    protected void onCreate(Bundle savedInstanceState) {
        super.onCreate(savedInstanceState);
        Intent next = getIntent().getParcelableExtra("route");
        if (next != null) {
            startActivity(next);
        }
        finish();
    }
}
